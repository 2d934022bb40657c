//! Trajectory dataset files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic       b"TDGRTRAJ"
//! version     u32 = 1
//! task_count  u32
//! horizon     u32   (L)
//! state_dim   u32   (2)
//! action_dim  u32   (2)
//! count       u64   (number of trajectories)
//! task ids    count × u64
//! success     count × u64 (0/1)
//! states      count × L × state_dim f64
//! actions     count × L × action_dim f64
//! ```

use std::io::{Read, Write};

use super::rollout::Trajectory;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TDGRTRAJ";
const VERSION: u32 = 1;

pub fn write_dataset<W: Write>(mut w: W, task_count: usize, trajs: &[Trajectory]) -> Result<()> {
    let horizon = trajs.first().map_or(0, Trajectory::len);
    if trajs.iter().any(|t| t.len() != horizon || t.actions.len() != horizon) {
        return Err(Error::input("all trajectories in a dataset must share one length"));
    }
    let mut buf = Vec::with_capacity(36 + trajs.len() * (16 + horizon * 32));
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, task_count as u32, horizon as u32, 2, 2] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(trajs.len() as u64).to_le_bytes());
    for t in trajs {
        buf.extend_from_slice(&(t.task as u64).to_le_bytes());
    }
    for t in trajs {
        buf.extend_from_slice(&u64::from(t.success).to_le_bytes());
    }
    let states = trajs.iter().map(|t| &t.states);
    let actions = trajs.iter().map(|t| &t.actions);
    for column in [states.collect::<Vec<_>>(), actions.collect::<Vec<_>>()] {
        for points in column {
            for p in points {
                buf.extend_from_slice(&p[0].to_le_bytes());
                buf.extend_from_slice(&p[1].to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Returns `(task_count, trajectories)`.
pub fn read_dataset<R: Read>(mut r: R) -> Result<(usize, Vec<Trajectory>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("not a trajectory dataset (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let task_count = cur.u32()? as usize;
    let horizon = cur.u32()? as usize;
    let (sd, ad) = (cur.u32()?, cur.u32()?);
    if sd != 2 || ad != 2 {
        return Err(Error::Format(format!("unsupported dims state={sd} action={ad}")));
    }
    let count = cur.u64()? as usize;
    let tasks: Vec<usize> = (0..count).map(|_| cur.u64().map(|v| v as usize)).collect::<Result<_>>()?;
    let success: Vec<bool> = (0..count).map(|_| cur.u64().map(|v| v != 0)).collect::<Result<_>>()?;
    let read_points = |cur: &mut Cursor| -> Result<Vec<[f64; 2]>> {
        (0..horizon).map(|_| Ok([cur.f64()?, cur.f64()?])).collect()
    };
    let states: Vec<Vec<[f64; 2]>> = (0..count).map(|_| read_points(&mut cur)).collect::<Result<_>>()?;
    let actions: Vec<Vec<[f64; 2]>> = (0..count).map(|_| read_points(&mut cur)).collect::<Result<_>>()?;
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after dataset".into()));
    }
    let trajs = tasks
        .into_iter()
        .zip(success)
        .zip(states.into_iter().zip(actions))
        .map(|((task, success), (states, actions))| Trajectory { task, states, actions, success })
        .collect();
    Ok((task_count, trajs))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format("truncated dataset".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// One row per step: `trajectory,task,timestep,x,y,ax,ay` (timestep 1-based).
pub fn write_csv<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    writeln!(w, "trajectory,task,timestep,x,y,ax,ay")?;
    for (k, t) in trajs.iter().enumerate() {
        for (j, (s, a)) in t.states.iter().zip(&t.actions).enumerate() {
            writeln!(w, "{k},{},{},{},{},{},{}", t.task, j + 1, s[0], s[1], a[0], a[1])?;
        }
    }
    Ok(())
}
