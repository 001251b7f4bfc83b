//! Pair registration (feature RANSAC, then point-to-plane ICP) and the joint
//! refinement over several cluster pairs.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{fpfh, mutual_matches, oriented_normals, voxel_downsample};
use super::spatial::{estimate_surfaces, PointIndex};
use crate::error::{Error, Result};
use crate::geometry::{kabsch, PointCloud, RigidTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationParams {
    pub normal_neighbours: usize,
    /// Keypoint voxel size for the coarse phase.
    pub voxel: f64,
    /// Neighbourhood radius of the local descriptors.
    pub feature_radius: f64,
    pub ransac_iterations: usize,
    /// Distance under which a feature correspondence agrees with a hypothesis.
    pub ransac_inlier_distance: f64,
    pub min_consensus: f64,
    /// Coarse-to-fine correspondence radii.
    pub radii: Vec<f64>,
    pub max_iterations: usize,
    pub convergence: f64,
    /// Radius defining fitness.
    pub fitness_radius: f64,
    pub min_fitness: f64,
    pub seed: u64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            normal_neighbours: 20,
            voxel: 0.06,
            feature_radius: 0.2,
            ransac_iterations: 3000,
            ransac_inlier_distance: 0.1,
            min_consensus: 0.2,
            radii: vec![0.5, 0.25, 0.125, 0.0625, 0.05],
            max_iterations: 50,
            convergence: 1e-6,
            fitness_radius: 0.05,
            min_fitness: 0.3,
            seed: 0x1c9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps the source onto the target.
    pub transform: RigidTransform,
    /// Point-to-plane RMS over matches within the fitness radius, metres.
    pub rms: f64,
    /// Fraction of source points with a target neighbour within the fitness radius.
    pub fitness: f64,
    pub iterations: usize,
    /// Inlier fraction of the coarse feature correspondences.
    pub consensus: f64,
}

/// Target cloud with its index and 20-NN surface normals.
pub struct SurfaceTarget {
    points: Vec<Point3<f64>>,
    normals: Vec<Option<Vector3<f64>>>,
    index: PointIndex,
}

impl SurfaceTarget {
    pub fn new(cloud: &PointCloud, neighbours: usize) -> Self {
        let index = PointIndex::new(&cloud.points);
        let normals = estimate_surfaces(&cloud.points, &index, neighbours)
            .into_iter()
            .map(|s| s.normal)
            .collect();
        Self {
            points: cloud.points.clone(),
            normals,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Current estimate: `transform(source) ≈ scale · target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Alignment {
    pub transform: RigidTransform,
    pub scale: f64,
}

struct Term {
    residual: f64,
    jacobian: [f64; 7],
}

/// Truncated point-to-plane cost of one source/target pair and the
/// linearised terms of its matched points.
fn evaluate(
    source: &[Point3<f64>],
    target: &SurfaceTarget,
    at: &Alignment,
    radius: f64,
    terms: Option<&mut Vec<Term>>,
) -> (f64, usize) {
    let cap = radius * radius;
    let mut cost = 0.0;
    let mut matched = 0usize;
    let mut sink = terms;
    for p in source {
        let moved = at.transform.apply(p);
        let query = Point3::from(moved.coords / at.scale);
        let hit = target
            .index
            .nearest(&query)
            .filter(|(_, d2)| d2 * at.scale * at.scale <= cap)
            .and_then(|(j, _)| target.normals[j].map(|n| (j, n)));
        let Some((j, n)) = hit else {
            cost += cap;
            continue;
        };
        let q = target.points[j].coords * at.scale;
        let r = n.dot(&(moved.coords - q));
        cost += (r * r).min(cap);
        matched += 1;
        if let Some(out) = sink.as_deref_mut() {
            let c = moved.coords.cross(&n);
            out.push(Term {
                residual: r,
                jacobian: [c.x, c.y, c.z, n.x, n.y, n.z, -n.dot(&q)],
            });
        }
    }
    (cost, matched)
}

fn total_cost(problem: &[(&[Point3<f64>], &SurfaceTarget)], at: &Alignment, radius: f64) -> (f64, usize) {
    problem.iter().fold((0.0, 0), |(c, m), (s, t)| {
        let (ci, mi) = evaluate(s, t, at, radius, None);
        (c + ci, m + mi)
    })
}

/// Damped normal-equation step; `None` if the system is singular.
fn solve_step(terms: &[Term], dim: usize, damping: f64) -> Option<DVector<f64>> {
    let mut jtj = DMatrix::<f64>::zeros(dim, dim);
    let mut jtr = DVector::<f64>::zeros(dim);
    for t in terms {
        for a in 0..dim {
            jtr[a] += t.jacobian[a] * t.residual;
            for b in a..dim {
                jtj[(a, b)] += t.jacobian[a] * t.jacobian[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    let trace = jtj.trace().max(1e-300);
    for a in 0..dim {
        jtj[(a, a)] += damping * jtj[(a, a)] + 1e-12 * trace / dim as f64;
    }
    let step = jtj.cholesky()?.solve(&(-jtr));
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn apply_step(at: &Alignment, step: &DVector<f64>) -> Alignment {
    let delta = RigidTransform::from_scaled_axis(
        Vector3::new(step[0], step[1], step[2]),
        Vector3::new(step[3], step[4], step[5]),
    );
    Alignment {
        transform: delta.compose(&at.transform).renormalized(),
        scale: if step.len() > 6 {
            at.scale * step[6].exp()
        } else {
            at.scale
        },
    }
}

pub(crate) struct RefineOutcome {
    pub alignment: Alignment,
    pub iterations: usize,
}

/// Coarse-to-fine damped Gauss–Newton on the truncated point-to-plane cost.
/// Only improving steps are accepted; a stage ends on a step below
/// `convergence`, five consecutive rejected steps or its iteration share.
pub(crate) fn refine(
    problem: &[(&[Point3<f64>], &SurfaceTarget)],
    initial: Alignment,
    radii: &[f64],
    max_iterations: usize,
    convergence: f64,
    with_scale: bool,
) -> Result<RefineOutcome> {
    let dim = if with_scale { 7 } else { 6 };
    let per_stage = (max_iterations / radii.len().max(1)).max(1);
    let mut at = initial;
    let mut iterations = 0;
    for &radius in radii {
        let mut damping = 1e-6;
        let mut failures = 0;
        let mut stage_iterations = 0;
        let mut terms = Vec::new();
        let mut current = f64::NAN;
        while stage_iterations < per_stage && iterations < max_iterations {
            if current.is_nan() {
                terms.clear();
                current = problem
                    .iter()
                    .fold(0.0, |c, (s, t)| c + evaluate(s, t, &at, radius, Some(&mut terms)).0);
            }
            if terms.len() < dim {
                break;
            }
            stage_iterations += 1;
            iterations += 1;
            let Some(step) = solve_step(&terms, dim, damping) else {
                break;
            };
            let candidate = apply_step(&at, &step);
            let (cost, _) = total_cost(problem, &candidate, radius);
            if !cost.is_finite() {
                return Err(Error::RefineFailed("non-finite registration cost".into()));
            }
            if cost < current {
                at = candidate;
                current = f64::NAN;
                damping = (damping * 0.1).max(1e-9);
                failures = 0;
                if step.norm() < convergence {
                    break;
                }
            } else {
                if step.norm() < convergence {
                    break;
                }
                damping *= 10.0;
                failures += 1;
                if failures >= 5 {
                    break;
                }
            }
        }
    }
    Ok(RefineOutcome {
        alignment: at,
        iterations,
    })
}

fn fitness_and_rms(source: &[Point3<f64>], target: &SurfaceTarget, t: &RigidTransform, radius: f64) -> (f64, f64) {
    if source.is_empty() {
        return (0.0, 0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    let mut planar = 0usize;
    for p in source {
        let moved = t.apply(p);
        if let Some((j, d2)) = target.index.nearest(&moved) {
            if d2 <= radius * radius {
                hits += 1;
                if let Some(n) = target.normals[j] {
                    sum += n.dot(&(moved - target.points[j])).powi(2);
                    planar += 1;
                }
            }
        }
    }
    let rms = if planar > 0 { (sum / planar as f64).sqrt() } else { 0.0 };
    (hits as f64 / source.len() as f64, rms)
}

/// Feature-based RANSAC alignment without an initial guess. Returns the
/// transform and the consensus (inliers over correspondences).
pub fn coarse_align(
    source: &PointCloud,
    target: &PointCloud,
    params: &RegistrationParams,
) -> Result<(RigidTransform, f64)> {
    let describe = |cloud: &PointCloud| {
        let keys = voxel_downsample(&cloud.points, params.voxel);
        let index = PointIndex::new(&keys);
        let normals = oriented_normals(&keys, &index, params.normal_neighbours);
        let features = fpfh(&keys, &normals, &index, params.feature_radius);
        (keys, features)
    };
    let (src_keys, src_feat) = describe(source);
    let (tgt_keys, tgt_feat) = describe(target);
    let matches = mutual_matches(&src_feat, &tgt_feat);
    if matches.len() < 3 {
        return Err(Error::CoarseFailed(format!(
            "only {} feature correspondences",
            matches.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let inlier2 = params.ransac_inlier_distance * params.ransac_inlier_distance;
    let count_inliers = |t: &RigidTransform| {
        matches
            .iter()
            .filter(|&&(i, j)| (t.apply(&src_keys[i]) - tgt_keys[j]).norm_squared() <= inlier2)
            .count()
    };
    let mut best: Option<(RigidTransform, usize)> = None;
    for _ in 0..params.ransac_iterations {
        let pick: [usize; 3] = std::array::from_fn(|_| rng.gen_range(0..matches.len()));
        if pick[0] == pick[1] || pick[1] == pick[2] || pick[0] == pick[2] {
            continue;
        }
        let src: Vec<Point3<f64>> = pick.iter().map(|&k| src_keys[matches[k].0]).collect();
        let dst: Vec<Point3<f64>> = pick.iter().map(|&k| tgt_keys[matches[k].1]).collect();
        // Congruent triangles only.
        let consistent = (0..3).all(|a| {
            let b = (a + 1) % 3;
            let (ds, dt) = ((src[a] - src[b]).norm(), (dst[a] - dst[b]).norm());
            ds > params.voxel && ds.min(dt) >= 0.9 * ds.max(dt)
        });
        if !consistent {
            continue;
        }
        let Ok(t) = kabsch(&src, &dst) else { continue };
        let n = count_inliers(&t);
        if best.as_ref().is_none_or(|(_, b)| n > *b) {
            best = Some((t, n));
        }
    }
    let Some((mut t, mut n)) = best else {
        return Err(Error::CoarseFailed("no congruent feature triplet".into()));
    };
    // Polish on the consensus set.
    for _ in 0..3 {
        let (src, dst): (Vec<_>, Vec<_>) = matches
            .iter()
            .filter(|&&(i, j)| (t.apply(&src_keys[i]) - tgt_keys[j]).norm_squared() <= inlier2)
            .map(|&(i, j)| (src_keys[i], tgt_keys[j]))
            .unzip();
        let Ok(refit) = kabsch(&src, &dst) else { break };
        let m = count_inliers(&refit);
        if m < n {
            break;
        }
        t = refit;
        n = m;
    }
    let consensus = n as f64 / matches.len() as f64;
    if consensus < params.min_consensus {
        return Err(Error::CoarseFailed(format!(
            "consensus {:.1}% below {:.0}%",
            consensus * 100.0,
            params.min_consensus * 100.0
        )));
    }
    Ok((t, consensus))
}

/// Point-to-plane ICP from `initial` over the coarse-to-fine radius schedule.
pub fn refine_pair(
    source: &PointCloud,
    target: &PointCloud,
    initial: RigidTransform,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    let surface = SurfaceTarget::new(target, params.normal_neighbours);
    let outcome = refine(
        &[(&source.points, &surface)],
        Alignment {
            transform: initial,
            scale: 1.0,
        },
        &params.radii,
        params.max_iterations,
        params.convergence,
        false,
    )?;
    let transform = outcome.alignment.transform;
    let (fitness, rms) = fitness_and_rms(&source.points, &surface, &transform, params.fitness_radius);
    if fitness < params.min_fitness {
        return Err(Error::RefineFailed(format!(
            "fitness {fitness:.3} below {}",
            params.min_fitness
        )));
    }
    Ok(RegistrationResult {
        transform,
        rms,
        fitness,
        iterations: outcome.iterations,
        consensus: f64::NAN,
    })
}

/// Registers `source` onto `target` with no initial guess.
pub fn register_pair(
    source: &PointCloud,
    target: &PointCloud,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    const MIN_POINTS: usize = 50;
    if source.len() < MIN_POINTS || target.len() < MIN_POINTS {
        return Err(Error::invalid(format!(
            "registration needs at least {MIN_POINTS} points per cloud (source {}, target {})",
            source.len(),
            target.len()
        )));
    }
    let (coarse, consensus) = coarse_align(source, target, params)?;
    let mut result = refine_pair(source, target, coarse, params)?;
    result.consensus = consensus;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRefinement {
    pub transform: RigidTransform,
    /// Mean truncated point-to-plane cost at the finest radius, before and after.
    pub initial_residual: f64,
    pub final_residual: f64,
    pub iterations: usize,
}

/// Mean truncated point-to-plane cost of `transform` over all pairs.
pub fn joint_residual(
    pairs: &[(PointCloud, PointCloud)],
    transform: &RigidTransform,
    radius: f64,
    neighbours: usize,
) -> f64 {
    let targets: Vec<SurfaceTarget> = pairs.iter().map(|(_, t)| SurfaceTarget::new(t, neighbours)).collect();
    let problem: Vec<(&[Point3<f64>], &SurfaceTarget)> = pairs
        .iter()
        .zip(&targets)
        .map(|((s, _), t)| (s.points.as_slice(), t))
        .collect();
    mean_cost(&problem, transform, 1.0, radius)
}

pub(crate) fn mean_cost_at(
    problem: &[(&[Point3<f64>], &SurfaceTarget)],
    transform: &RigidTransform,
    radius: f64,
) -> f64 {
    mean_cost(problem, transform, 1.0, radius)
}

fn mean_cost(problem: &[(&[Point3<f64>], &SurfaceTarget)], transform: &RigidTransform, scale: f64, radius: f64) -> f64 {
    let n: usize = problem.iter().map(|(s, _)| s.len()).sum();
    let (c, _) = total_cost(
        problem,
        &Alignment {
            transform: *transform,
            scale,
        },
        radius,
    );
    c / n.max(1) as f64
}

/// One rigid transform minimising the summed point-to-plane cost of every
/// (source, target) cluster pair at once.
pub fn joint_refine(
    pairs: &[(PointCloud, PointCloud)],
    initial: RigidTransform,
    params: &RegistrationParams,
) -> Result<JointRefinement> {
    let targets: Vec<SurfaceTarget> = pairs
        .iter()
        .map(|(_, t)| SurfaceTarget::new(t, params.normal_neighbours))
        .collect();
    let problem: Vec<(&[Point3<f64>], &SurfaceTarget)> = pairs
        .iter()
        .zip(&targets)
        .map(|((s, _), t)| (s.points.as_slice(), t))
        .collect();
    let outcome = joint_refine_problem(&problem, initial, 1.0, params, false)?;
    Ok(JointRefinement {
        transform: outcome.0.transform,
        initial_residual: outcome.1,
        final_residual: outcome.2,
        iterations: outcome.3,
    })
}

/// Shared by the rigid joint refinement and the similarity polish: returns
/// the alignment plus the initial and final mean cost at the finest radius.
pub(crate) fn joint_refine_problem(
    problem: &[(&[Point3<f64>], &SurfaceTarget)],
    initial: RigidTransform,
    initial_scale: f64,
    params: &RegistrationParams,
    with_scale: bool,
) -> Result<(Alignment, f64, f64, usize)> {
    if problem.is_empty() || problem.iter().all(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(Error::invalid(
            "joint refinement needs at least one non-empty cluster pair",
        ));
    }
    let finest = params.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let before = mean_cost(problem, &initial, initial_scale, finest);
    let start = Alignment {
        transform: initial,
        scale: initial_scale,
    };
    let outcome = refine(
        problem,
        start,
        &params.radii,
        params.max_iterations * problem.len().max(1),
        params.convergence,
        with_scale,
    )?;
    let after = mean_cost(problem, &outcome.alignment.transform, outcome.alignment.scale, finest);
    if !after.is_finite() {
        return Err(Error::RefineFailed("joint refinement diverged".into()));
    }
    // Coarse stages optimise a wider window; never hand back something worse
    // at the finest radius than what came in.
    if after > before {
        return Ok((start, before, before, outcome.iterations));
    }
    Ok((outcome.alignment, before, after, outcome.iterations))
}
