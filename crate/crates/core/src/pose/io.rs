use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::types::{Person, PoseFrame};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Record {
    frame_index: usize,
    persons: Vec<Person>,
}

/// Writes one JSON record per frame.
pub fn write_jsonl<W: Write>(mut out: W, frames: &[PoseFrame]) -> Result<()> {
    for (frame_index, f) in frames.iter().enumerate() {
        let rec = Record { frame_index, persons: f.persons.clone() };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads pose records into `num_frames` slots. Frames without a record stay
/// empty; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(input: R, num_frames: usize) -> Result<Vec<PoseFrame>> {
    let mut frames = vec![PoseFrame::empty(); num_frames];
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("pose record on line {}: {e}", lineno + 1)))?;
        let frame = PoseFrame { persons: rec.persons };
        frame.validate()?;
        let slot = frames
            .get_mut(rec.frame_index)
            .ok_or_else(|| Error::Index(format!("frame_index {} >= {num_frames}", rec.frame_index)))?;
        *slot = frame;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Keypoint;

    #[test]
    fn jsonl_round_trip() {
        let person = Person { bbox: [1.0, 2.0, 3.0, 4.0], keypoints: vec![Keypoint::from([1.5, 2.5, 0.75]); 17] };
        let frames = vec![PoseFrame { persons: vec![person] }, PoseFrame::empty()];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &frames).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"frame_index\":0,\"persons\":[{\"bbox\":[1.0,2.0,3.0,4.0],\"keypoints\":[[1.5,2.5,0.75]"));
        assert_eq!(read_jsonl(buf.as_slice(), 2).unwrap(), frames);
    }

    #[test]
    fn malformed_records_are_rejected() {
        assert!(matches!(read_jsonl(&b"{\"frame_index\":0}\n"[..], 1), Err(Error::Format(_))));
        let short = r#"{"frame_index":0,"persons":[{"bbox":[0,0,1,1],"keypoints":[[0,0,1]]}]}"#;
        assert!(matches!(read_jsonl(short.as_bytes(), 1), Err(Error::Format(_))));
        assert!(matches!(read_jsonl(&b"{\"frame_index\":3,\"persons\":[]}"[..], 2), Err(Error::Index(_))));
    }
}
