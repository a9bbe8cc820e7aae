//! Trajectory and path-law export.
//!
//! Binary trajectories: the magic `ERWT`, a version byte, `α` as a
//! little-endian `f64`, the step count as a little-endian `u64`, then the
//! direction codes packed four per byte, least significant bits first.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::oracle::{PathLaw, MAX_PATH_LEN};
use crate::walk::{Direction, Trajectory};

pub const MAGIC: [u8; 4] = *b"ERWT";
pub const FORMAT_VERSION: u8 = 1;
/// Largest path length written by [`write_path_law_csv`].
pub const MAX_CSV_PATH_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub alpha: f64,
    pub trajectory: Trajectory,
}

pub fn write_trajectory_binary<W: Write>(mut w: W, alpha: f64, traj: &Trajectory) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&alpha.to_le_bytes())?;
    w.write_all(&(traj.len() as u64).to_le_bytes())?;
    for chunk in traj.steps.chunks(4) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |b, (i, d)| b | (d.code() << (2 * i)));
        w.write_all(&[byte])?;
    }
    Ok(())
}

pub fn read_trajectory_binary<R: Read>(mut r: R) -> Result<StoredTrajectory> {
    let mut header = [0u8; 4 + 1 + 8 + 8];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if header[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if header[4] != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let alpha = f64::from_le_bytes(header[5..13].try_into().expect("8 bytes"));
    let len = u64::from_le_bytes(header[13..21].try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| Error::Format("step count overflows".into()))?;
    let mut packed = vec![0u8; len.div_ceil(4)];
    r.read_exact(&mut packed)
        .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
    let steps = (0..len)
        .map(|t| Direction::from_code(packed[t / 4] >> (2 * (t % 4))))
        .collect();
    Ok(StoredTrajectory {
        alpha,
        trajectory: Trajectory::new(steps),
    })
}

/// `# `-prefixed comment lines.
pub fn write_comments<W: Write>(mut w: W, lines: &[String]) -> Result<()> {
    for line in lines {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Rows `(k, x, y, N1, N2, N3, N4)` for `k = 0..=len`.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    traj: &Trajectory,
    comments: &[String],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "k,x,y,N1,N2,N3,N4")?;
    for (k, (p, c)) in traj.positions().zip(traj.counts_iter()).enumerate() {
        let [n1, n2, n3, n4] = c.raw_counts();
        writeln!(w, "{k},{},{},{n1},{n2},{n3},{n4}", p.x, p.y)?;
    }
    Ok(())
}

/// Reads back the steps of a trajectory CSV, checking every row against
/// the positions and counts implied by the previous one.
pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Trajectory> {
    let mut rows = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("k,") || line.is_empty() {
            continue;
        }
        let fields: Vec<i64> = line
            .split(',')
            .map(|f| {
                f.parse()
                    .map_err(|_| Error::Format(format!("bad field in {line:?}")))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 7 {
            return Err(Error::Format(format!("expected 7 fields in {line:?}")));
        }
        rows.push(fields);
    }
    let mut steps = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let changed: Vec<usize> = (0..4).filter(|&i| b[3 + i] != a[3 + i]).collect();
        let dir = match changed[..] {
            [i] if b[3 + i] == a[3 + i] + 1 && b[0] == a[0] + 1 => Direction::from_code(i as u8),
            _ => return Err(Error::Format(format!("inconsistent rows at k = {}", b[0]))),
        };
        let v = dir.vector();
        if (b[1], b[2]) != (a[1] + v.x, a[2] + v.y) {
            return Err(Error::Format(format!("position mismatch at k = {}", b[0])));
        }
        steps.push(dir);
    }
    Ok(Trajectory::new(steps))
}

fn path_string(path: &[Direction]) -> String {
    path.iter()
        .map(|d| match d {
            Direction::East => 'E',
            Direction::North => 'N',
            Direction::West => 'W',
            Direction::South => 'S',
        })
        .collect()
}

/// Rows `(code, path, probability)` in code order.
pub fn write_path_law_csv<W: Write>(mut w: W, law: &PathLaw, comments: &[String]) -> Result<()> {
    if law.m > MAX_CSV_PATH_LEN {
        return Err(Error::ResourceLimit(format!(
            "path-law CSV is limited to m <= {MAX_CSV_PATH_LEN} (enumeration allows {MAX_PATH_LEN})"
        )));
    }
    write_comments(&mut w, comments)?;
    writeln!(w, "code,path,probability")?;
    for (code, (path, p)) in law.iter().enumerate() {
        writeln!(w, "{code},{},{p:e}", path_string(&path))?;
    }
    Ok(())
}
