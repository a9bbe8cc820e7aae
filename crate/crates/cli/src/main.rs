fn main() {
    std::process::exit(erwlab::main_with_args(std::env::args_os()));
}
