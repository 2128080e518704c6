use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::ply;
use crate::error::{Error, Result};
use crate::geom::{segment_distance, LabeledMesh, Vec3};

/// One tapered cylinder of the skeleton. Segments are stored parents-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
    pub start_radius: f64,
    pub end_radius: f64,
    pub organ_id: i32,
    pub instance_id: i32,
    pub order: u32,
    pub parent: Option<usize>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Radius used for collision tests: the larger end.
    pub fn capsule_radius(&self) -> f64 {
        self.start_radius.max(self.end_radius)
    }
}

/// A generated tree: skeleton plus organ-labeled surface mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub skeleton: Vec<Segment>,
    pub mesh: LabeledMesh,
}

#[derive(Serialize, Deserialize)]
struct SkeletonNode {
    id: usize,
    #[serde(flatten)]
    segment: Segment,
    children: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    segments: Vec<SkeletonNode>,
}

impl TreeModel {
    pub fn instance_count(&self) -> usize {
        let mut ids: Vec<i32> = self.skeleton.iter().map(|s| s.instance_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.skeleton.len()];
        for (i, s) in self.skeleton.iter().enumerate() {
            if let Some(p) = s.parent {
                children[p].push(i);
            }
        }
        children
    }

    /// Vertical span of segments with the given organ class.
    pub fn organ_z_range(&self, organ: i32) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for s in self.skeleton.iter().filter(|s| s.organ_id == organ) {
            let (lo, hi) = (s.start.z.min(s.end.z), s.start.z.max(s.end.z));
            range = Some(match range {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            });
        }
        range
    }

    /// Skeleton as a JSON adjacency list.
    pub fn skeleton_json(&self) -> Result<String> {
        let children = self.children();
        let file = SkeletonFile {
            segments: self
                .skeleton
                .iter()
                .cloned()
                .zip(children)
                .enumerate()
                .map(|(id, (segment, children))| SkeletonNode { id, segment, children })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn skeleton_from_json(text: &str) -> Result<Vec<Segment>> {
        let file: SkeletonFile = serde_json::from_str(text)?;
        for (i, n) in file.segments.iter().enumerate() {
            if n.id != i {
                return Err(Error::Schema(format!("skeleton node {i} has id {}", n.id)));
            }
        }
        Ok(file.segments.into_iter().map(|n| n.segment).collect())
    }

    pub fn mesh_path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.ply"))
    }

    pub fn skeleton_path(dir: &Path, stem: &str) -> PathBuf {
        dir.join(format!("{stem}.skeleton.json"))
    }

    /// Writes `<stem>.ply` (binary mesh) and `<stem>.skeleton.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ply::write_mesh_ply(&self.mesh, &Self::mesh_path(dir, stem))?;
        let sk = Self::skeleton_path(dir, stem);
        fs::write(&sk, self.skeleton_json()?).map_err(|e| Error::io(&sk, e))
    }

    /// Reads a mesh PLY and, when present, the sibling skeleton file.
    pub fn read(mesh_path: &Path) -> Result<Self> {
        let mesh = ply::mesh_from_ply(&ply::read_ply(mesh_path)?)?;
        let stem = mesh_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let sk = Self::skeleton_path(mesh_path.parent().unwrap_or(Path::new(".")), &stem);
        let skeleton = if sk.exists() {
            let text = fs::read_to_string(&sk).map_err(|e| Error::io(&sk, e))?;
            Self::skeleton_from_json(&text)?
        } else {
            Vec::new()
        };
        Ok(Self { skeleton, mesh })
    }
}

/// Segment pairs that count as organ contacts.
///
/// Pairs within one instance never collide. The first segment of a branch
/// grows out of its parent's surface, so it is exempt against every segment
/// of the parent instance.
pub(crate) fn exempt(skeleton: &[Segment], a: usize, b: usize) -> bool {
    let (sa, sb) = (&skeleton[a], &skeleton[b]);
    if sa.instance_id == sb.instance_id {
        return true;
    }
    let attaches_to = |child: &Segment, other: &Segment| {
        child.parent.is_some_and(|p| {
            skeleton[p].instance_id != child.instance_id && skeleton[p].instance_id == other.instance_id
        })
    };
    attaches_to(sa, sb) || attaches_to(sb, sa)
}

/// All colliding segment pairs `(i, j)` with `i < j`.
pub fn collisions(model: &TreeModel, tolerance: f64) -> Vec<(usize, usize)> {
    let sk = &model.skeleton;
    let mut out = Vec::new();
    for i in 0..sk.len() {
        for j in i + 1..sk.len() {
            if exempt(sk, i, j) {
                continue;
            }
            let limit = sk[i].capsule_radius() + sk[j].capsule_radius() - tolerance;
            if segment_distance(&sk[i].start, &sk[i].end, &sk[j].start, &sk[j].end) < limit {
                out.push((i, j));
            }
        }
    }
    out
}
