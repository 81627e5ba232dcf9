use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::phantom::{AGE_RANGE, SCORE_RANGE};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 6] = ["subject_id", "session_id", "path", "age", "sdmt", "sex"];

/// One imaging session with its labels. `sdmt` is absent for cohorts that
/// carry age only.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeRecord {
    pub subject_id: String,
    pub session_id: String,
    pub path: PathBuf,
    pub age: f64,
    pub sdmt: Option<f64>,
    pub sex: u8,
}

impl VolumeRecord {
    /// `subject_id:session_id`, used as the row key in every exported table.
    pub fn id(&self) -> String {
        format!("{}:{}", self.subject_id, self.session_id)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.subject_id.is_empty() || self.session_id.is_empty() {
            return Err("empty subject or session id".into());
        }
        if self.subject_id.contains(':') || self.session_id.contains(':') {
            return Err("ids may not contain ':'".into());
        }
        if !(AGE_RANGE.0..=AGE_RANGE.1).contains(&self.age) {
            return Err(format!("age {} outside [18, 97]", self.age));
        }
        if let Some(s) = self.sdmt {
            if !(SCORE_RANGE.0..=SCORE_RANGE.1).contains(&s) {
                return Err(format!("sdmt {s} outside [16, 97]"));
            }
        }
        if self.sex > 1 {
            return Err(format!("sex {} not in {{0, 1}}", self.sex));
        }
        Ok(())
    }

    /// Volume path resolved against the manifest's directory.
    pub fn resolved_path(&self, manifest_dir: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            manifest_dir.join(&self.path)
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<VolumeRecord>> {
    let fail = |line: u64, msg: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(fail(1, format!("expected header {}", MANIFEST_HEADER.join(","))));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != MANIFEST_HEADER.len() {
            return Err(fail(line, format!("expected 6 fields, found {}", row.len())));
        }
        let number = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| fail(line, format!("{}: not a number: {:?}", MANIFEST_HEADER[i], &row[i])))
        };
        let sdmt = if row[4].trim().is_empty() { None } else { Some(number(4)?) };
        let sex = match row[5].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(fail(line, format!("sex: expected 0 or 1, found {other:?}"))),
        };
        let record = VolumeRecord {
            subject_id: row[0].to_string(),
            session_id: row[1].to_string(),
            path: PathBuf::from(&row[2]),
            age: number(3)?,
            sdmt,
            sex,
        };
        record.validate().map_err(|msg| fail(line, msg))?;
        if !seen.insert((record.subject_id.clone(), record.session_id.clone())) {
            return Err(fail(line, format!("duplicate session {}", record.id())));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_manifest(records: &[VolumeRecord], path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate().map_err(|m| Error::invalid(format!("{}: {m}", r.id())))?;
        if !seen.insert((&r.subject_id, &r.session_id)) {
            return Err(Error::invalid(format!("duplicate session {}", r.id())));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    writer.write_record(MANIFEST_HEADER).map_err(io)?;
    for r in records {
        let sdmt = r.sdmt.map(|s| s.to_string()).unwrap_or_default();
        writer
            .write_record([
                r.subject_id.as_str(),
                r.session_id.as_str(),
                &r.path.to_string_lossy(),
                &r.age.to_string(),
                &sdmt,
                &r.sex.to_string(),
            ])
            .map_err(io)?;
    }
    let mut inner = writer.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(subject: &str, session: &str, age: f64, sdmt: Option<f64>) -> VolumeRecord {
        VolumeRecord {
            subject_id: subject.into(),
            session_id: session.into(),
            path: PathBuf::from(format!("volumes/{subject}_{session}.mvol")),
            age,
            sdmt,
            sex: 1,
        }
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let records = vec![rec("s1", "a", 33.25, Some(50.5)), rec("s1", "b", 34.0, None), rec("s2", "a", 80.1, Some(16.0))];
        save_manifest(&records, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), records);
    }

    #[test]
    fn empty_sdmt_is_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "subject_id,session_id,path,age,sdmt,sex\ns1,a,v.mvol,40,,0\n").unwrap();
        let r = load_manifest(&path).unwrap();
        assert_eq!(r[0].sdmt, None);
    }

    #[test]
    fn out_of_range_age_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(
            &path,
            "subject_id,session_id,path,age,sdmt,sex\ns1,a,v.mvol,40,,0\ns2,a,w.mvol,150,,0\n",
        )
        .unwrap();
        let err = load_manifest(&path).unwrap_err();
        match err {
            Error::Manifest { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("age"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "subject_id,session_id,path,age,sdmt,sex\ns1,a,v.mvol,forty,,0\n").unwrap();
        assert!(load_manifest(&path).is_err());
        std::fs::write(&path, "subject_id,session_id,path,age,sdmt,sex\ns1,a,v.mvol,40\n").unwrap();
        assert!(load_manifest(&path).is_err());
        std::fs::write(&path, "subject,session,path,age,sdmt,sex\n").unwrap();
        assert!(load_manifest(&path).is_err());
        std::fs::write(
            &path,
            "subject_id,session_id,path,age,sdmt,sex\ns1,a,v.mvol,40,,0\ns1,a,v.mvol,41,,0\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());
    }
}
