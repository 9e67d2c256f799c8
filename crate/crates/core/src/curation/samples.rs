//! JSON Lines sample manifests. Angles are written in degrees.

use serde::{Deserialize, Serialize};

use super::{CurationError, Dof, PairSample, SampleTag};
use crate::geometry::PoseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseVectorRecord {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub roll_deg: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

/// One line of a sample manifest. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub sequence: String,
    pub src_index: u64,
    pub tgt_index: u64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_deviation_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<Dof>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<i8>,
    pub pose_vector: PoseVectorRecord,
    pub label: String,
    pub label_index: u8,
}

impl From<&PairSample> for SampleRecord {
    fn from(s: &PairSample) -> Self {
        let v = &s.pose_vector;
        let mut rec = SampleRecord {
            id: s.id(),
            sequence: s.sequence.clone(),
            src_index: s.src_index,
            tgt_index: s.tgt_index,
            kind: String::new(),
            bin_deg: None,
            tau_deg: None,
            mean_deviation_px: None,
            dof: None,
            sign: None,
            pose_vector: PoseVectorRecord {
                pitch_deg: v.pitch.to_degrees(),
                yaw_deg: v.yaw.to_degrees(),
                roll_deg: v.roll.to_degrees(),
                tx: v.tx,
                ty: v.ty,
                tz: v.tz,
            },
            label: s.label.clone(),
            label_index: s.label_index,
        };
        match s.tag {
            SampleTag::Bench { bin, tau, mean_deviation } => {
                rec.kind = "bench".into();
                rec.bin_deg = Some(bin);
                rec.tau_deg = Some(tau);
                rec.mean_deviation_px = Some(mean_deviation);
            }
            SampleTag::Diag { dof, sign } => {
                rec.kind = "diag".into();
                rec.dof = Some(dof);
                rec.sign = Some(sign);
            }
        }
        rec
    }
}

impl TryFrom<SampleRecord> for PairSample {
    type Error = String;

    fn try_from(r: SampleRecord) -> Result<Self, String> {
        let tag = match r.kind.as_str() {
            "bench" => SampleTag::Bench {
                bin: r.bin_deg.ok_or("bench sample without bin_deg")?,
                tau: r.tau_deg.ok_or("bench sample without tau_deg")?,
                mean_deviation: r.mean_deviation_px.ok_or("bench sample without mean_deviation_px")?,
            },
            "diag" => SampleTag::Diag {
                dof: r.dof.ok_or("diag sample without dof")?,
                sign: match r.sign {
                    Some(s @ (1 | -1)) => s,
                    other => return Err(format!("diag sign must be 1 or -1, got {other:?}")),
                },
            },
            other => return Err(format!("unknown sample kind {other:?}")),
        };
        if r.label_index > 1 {
            return Err(format!("label_index must be 0 or 1, got {}", r.label_index));
        }
        let p = &r.pose_vector;
        let sample = PairSample {
            sequence: r.sequence,
            src_index: r.src_index,
            tgt_index: r.tgt_index,
            pose_vector: PoseVector {
                pitch: p.pitch_deg.to_radians(),
                yaw: p.yaw_deg.to_radians(),
                roll: p.roll_deg.to_radians(),
                tx: p.tx,
                ty: p.ty,
                tz: p.tz,
            },
            tag,
            label: r.label,
            label_index: r.label_index,
        };
        if sample.id() != r.id {
            return Err(format!("id {:?} does not match sequence and indices ({:?})", r.id, sample.id()));
        }
        Ok(sample)
    }
}

pub fn write_samples_jsonl(samples: &[PairSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&SampleRecord::from(s)).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn read_samples_jsonl(text: &str) -> Result<Vec<PairSample>, CurationError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let rec: SampleRecord =
                serde_json::from_str(line).map_err(|e| CurationError::Parse { line: n + 1, reason: e.to_string() })?;
            PairSample::try_from(rec).map_err(|reason| CurationError::Parse { line: n + 1, reason })
        })
        .collect()
}
