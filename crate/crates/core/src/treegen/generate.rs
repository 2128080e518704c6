use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{Segment, TreeModel};
use super::stats::{interpolate_stats, TreeStats};
use super::TreeGenConfig;
use crate::error::{Error, Result};
use crate::geom::{segment_distance, LabeledMesh, Vec3};
use crate::rng;

#[derive(Debug, Clone, Copy)]
struct Branch {
    first_segment: usize,
    segments: usize,
    direction: Vec3,
    length: f64,
    base_radius: f64,
    order: u32,
}

struct Builder<'a> {
    cfg: &'a TreeGenConfig,
    skeleton: Vec<Segment>,
    branches: Vec<Branch>,
    next_instance: i32,
}

fn unit_from_angles(azimuth: f64, elevation: f64) -> Vec3 {
    Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Two unit vectors completing `axis` to an orthonormal frame.
fn frame(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

impl<'a> Builder<'a> {
    fn taper(&self, base: f64, s: f64) -> f64 {
        base * (1.0 - (1.0 - self.cfg.tip_ratio) * s)
    }

    fn build_trunk(&mut self, stats: &TreeStats) {
        let nodes = &stats.trunk_skeleton;
        let origin = nodes[0];
        let span = nodes[nodes.len() - 1].z - origin.z;
        let rel: Vec<Vec3> = if span > 0.0 {
            let scale = stats.trunk_height / span;
            nodes.iter().map(|p| (p - origin) * scale).collect()
        } else {
            vec![Vec3::zeros(), Vec3::new(0.0, 0.0, stats.trunk_height)]
        };
        let mut arc = vec![0.0];
        for w in rel.windows(2) {
            arc.push(arc[arc.len() - 1] + (w[1] - w[0]).norm());
        }
        let total = arc[arc.len() - 1];
        let n = self.cfg.trunk_segments;
        let at = |s: f64| -> Vec3 {
            let target = s * total;
            let k = arc.partition_point(|&a| a < target).clamp(1, rel.len() - 1);
            let seg = arc[k] - arc[k - 1];
            let f = if seg > 0.0 { (target - arc[k - 1]) / seg } else { 0.0 };
            rel[k - 1] + (rel[k] - rel[k - 1]) * f
        };
        let organ = self.cfg.organs.trunk;
        for i in 0..n {
            let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            self.skeleton.push(Segment {
                start: if i == 0 { Vec3::zeros() } else { at(s0) },
                end: at(s1),
                start_radius: self.taper(stats.trunk_base_radius, s0),
                end_radius: self.taper(stats.trunk_base_radius, s1),
                organ_id: organ,
                instance_id: 0,
                order: 0,
                parent: i.checked_sub(1),
            });
        }
        self.next_instance = 1;
    }

    #[allow(clippy::too_many_arguments)]
    fn chain(
        &self,
        start: Vec3,
        direction: Vec3,
        length: f64,
        base_radius: f64,
        order: u32,
        parent: usize,
    ) -> Vec<Segment> {
        let n = self.cfg.branch_segments;
        let base = self.skeleton.len();
        (0..n)
            .map(|i| {
                let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                Segment {
                    start: start + direction * (length * s0),
                    end: start + direction * (length * s1),
                    start_radius: self.taper(base_radius, s0),
                    end_radius: self.taper(base_radius, s1),
                    organ_id: self.cfg.organs.branch,
                    instance_id: self.next_instance,
                    order,
                    parent: Some(if i == 0 { parent } else { base + i - 1 }),
                }
            })
            .collect()
    }

    fn collides(&self, candidate: &[Segment]) -> bool {
        let tol = self.cfg.collision_tolerance;
        let parent_instance = candidate[0].parent.map(|p| self.skeleton[p].instance_id);
        for (k, c) in candidate.iter().enumerate() {
            let cm = (c.start + c.end) * 0.5;
            let cr = c.capsule_radius();
            let ch = c.length() * 0.5;
            for e in &self.skeleton {
                if k == 0 && Some(e.instance_id) == parent_instance {
                    continue;
                }
                let er = e.capsule_radius();
                let reach = ch + e.length() * 0.5 + cr + er;
                if ((e.start + e.end) * 0.5 - cm).norm_squared() > reach * reach {
                    continue;
                }
                if segment_distance(&c.start, &c.end, &e.start, &e.end) < cr + er - tol {
                    return true;
                }
            }
        }
        false
    }

    fn commit(&mut self, segs: Vec<Segment>, direction: Vec3, length: f64, base_radius: f64, order: u32) {
        self.branches.push(Branch {
            first_segment: self.skeleton.len(),
            segments: segs.len(),
            direction,
            length,
            base_radius,
            order,
        });
        self.skeleton.extend(segs);
        self.next_instance += 1;
    }

    fn place_primary(&mut self, rec: &super::BranchRecord, rng: &mut ChaCha8Rng) {
        let n = self.cfg.trunk_segments;
        for attempt in 0..=self.cfg.retry_budget {
            let (insertion, azimuth) = if attempt == 0 {
                (rec.insertion, rec.azimuth)
            } else {
                (
                    (rec.insertion + rng.random_range(-0.1..=0.1)).clamp(0.0, 1.0),
                    rng.random_range(0.0..TAU),
                )
            };
            let node = ((insertion * n as f64).round() as usize).clamp(1, n - 1);
            let parent = node - 1;
            let parent_radius = self.skeleton[parent].end_radius;
            let anchor = self.skeleton[parent].end;
            let outward = Vec3::new(azimuth.cos(), azimuth.sin(), 0.0);
            let direction = unit_from_angles(azimuth, rec.elevation);
            let radius = rec.base_radius.min(parent_radius);
            let segs = self.chain(
                anchor + outward * parent_radius,
                direction,
                rec.length,
                radius,
                1,
                parent,
            );
            if !self.collides(&segs) {
                self.commit(segs, direction, rec.length, radius, 1);
                return;
            }
        }
    }

    fn place_child(&mut self, parent: Branch, order: u32, rng: &mut ChaCha8Rng) {
        let (lo, hi) = self.cfg.child_angle_deg;
        let (u, v) = frame(&parent.direction);
        for _ in 0..=self.cfg.retry_budget {
            let node = rng.random_range(1..parent.segments);
            let parent_seg = parent.first_segment + node - 1;
            let parent_radius = self.skeleton[parent_seg].end_radius;
            let anchor = self.skeleton[parent_seg].end;
            let theta = rng.random_range(lo..=hi).to_radians();
            let phi = rng.random_range(0.0..TAU);
            let radial = u * phi.cos() + v * phi.sin();
            let direction = parent.direction * theta.cos() + radial * theta.sin();
            let length = parent.length * self.cfg.length_scale;
            let radius = (parent.base_radius * self.cfg.radius_scale).min(parent_radius);
            let segs = self.chain(
                anchor + radial * parent_radius,
                direction,
                length,
                radius,
                order,
                parent_seg,
            );
            if !self.collides(&segs) {
                self.commit(segs, direction, length, radius, order);
                return;
            }
        }
    }

    fn mesh(&self) -> LabeledMesh {
        let n = self.cfg.radial_segments;
        let mut mesh = LabeledMesh::default();
        let mut same_instance_child = vec![false; self.skeleton.len()];
        for s in &self.skeleton {
            if let Some(p) = s.parent {
                if self.skeleton[p].instance_id == s.instance_id {
                    same_instance_child[p] = true;
                }
            }
        }
        for (i, s) in self.skeleton.iter().enumerate() {
            let axis = (s.end - s.start).normalize();
            let (u, v) = frame(&axis);
            let ring = |mesh: &mut LabeledMesh, center: &Vec3, r: f64| -> Vec<u32> {
                (0..n)
                    .map(|k| {
                        let a = TAU * k as f64 / n as f64;
                        mesh.add_vertex(center + (u * a.cos() + v * a.sin()) * r)
                    })
                    .collect()
            };
            let lo = ring(&mut mesh, &s.start, s.start_radius);
            let hi = ring(&mut mesh, &s.end, s.end_radius);
            let (o, id) = (s.organ_id, s.instance_id);
            for k in 0..n {
                let k1 = (k + 1) % n;
                mesh.add_face([lo[k], lo[k1], hi[k1]], o, id);
                mesh.add_face([lo[k], hi[k1], hi[k]], o, id);
            }
            let starts_chain = s.parent.is_none_or(|p| self.skeleton[p].instance_id != id);
            if starts_chain {
                let c = mesh.add_vertex(s.start);
                for k in 0..n {
                    mesh.add_face([c, lo[(k + 1) % n], lo[k]], o, id);
                }
            }
            if !same_instance_child[i] {
                let c = mesh.add_vertex(s.end);
                for k in 0..n {
                    mesh.add_face([c, hi[k], hi[(k + 1) % n]], o, id);
                }
            }
        }
        mesh
    }
}

fn check_config(cfg: &TreeGenConfig) -> Result<()> {
    let ok = cfg.tip_ratio > 0.0
        && cfg.tip_ratio <= 1.0
        && cfg.length_scale > 0.0
        && cfg.radius_scale > 0.0
        && cfg.radial_segments >= 3
        && cfg.trunk_segments >= 2
        && cfg.branch_segments >= 2
        && cfg.collision_tolerance >= 0.0
        && cfg.child_angle_deg.0 <= cfg.child_angle_deg.1;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid generation config {cfg:?}")))
    }
}

/// Builds one tree. Deterministic in `(stats, seed, max_order, cfg)`.
pub fn generate_tree(stats: &TreeStats, seed: u64, max_order: u32, cfg: &TreeGenConfig) -> Result<TreeModel> {
    stats.validate()?;
    check_config(cfg)?;
    if max_order == 0 {
        return Err(Error::InvalidArgument("max order must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut b = Builder {
        cfg,
        skeleton: Vec::new(),
        branches: Vec::new(),
        next_instance: 0,
    };
    b.build_trunk(stats);
    let mut primary = stats.records_of_order(1);
    primary.sort_by(|x, y| x.insertion.total_cmp(&y.insertion));
    for rec in &primary {
        b.place_primary(rec, &mut rng);
    }
    let counts = stats.count_per_order();
    for order in 2..=max_order {
        let parents: Vec<Branch> = b.branches.iter().filter(|p| p.order == order - 1).copied().collect();
        let per_parent =
            cfg.children_per_branch
                .unwrap_or_else(|| match (counts.get(&order), counts.get(&(order - 1))) {
                    (Some(&k), Some(&p)) if k > 0 && p > 0 => ((k as f64 / p as f64).round() as usize).max(1),
                    _ => 2,
                });
        for parent in parents {
            for _ in 0..per_parent {
                b.place_child(parent, order, &mut rng);
            }
        }
    }
    let mesh = b.mesh();
    Ok(TreeModel {
        skeleton: b.skeleton,
        mesh,
    })
}

/// The interpolation drawn for one member of a population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMember {
    pub base_a: usize,
    pub base_b: usize,
    pub t: f64,
    pub stats: TreeStats,
    pub tree_seed: u64,
}

/// Draws, for each of `n` trees, a base pair, an interpolation weight and a
/// generation seed from the stream `(seed, index)`.
pub fn plan_population(bases: &[TreeStats], n: usize, seed: u64) -> Result<Vec<PopulationMember>> {
    if bases.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("need at least one base and one tree".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "population", i as u64);
            let base_a = rng.random_range(0..bases.len());
            let base_b = rng.random_range(0..bases.len());
            let t: f64 = rng.random();
            let interp_seed: u64 = rng.random();
            let tree_seed: u64 = rng.random();
            let stats = interpolate_stats(&bases[base_a], &bases[base_b], t, interp_seed)?;
            Ok(PopulationMember {
                base_a,
                base_b,
                t,
                stats,
                tree_seed,
            })
        })
        .collect()
}

/// Generates `n` trees from interpolated base statistics, in parallel.
pub fn generate_population(
    bases: &[TreeStats],
    n: usize,
    seed: u64,
    max_order: u32,
    cfg: &TreeGenConfig,
) -> Result<Vec<TreeModel>> {
    plan_population(bases, n, seed)?
        .par_iter()
        .map(|m| generate_tree(&m.stats, m.tree_seed, max_order, cfg))
        .collect()
}
