//! Changes to a live double-level code: adding a cloud (scale-out) and
//! splitting one cloud in two. Both leave every other cloud's matrices and
//! stored codeword untouched apart from the documented parity update.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{add_into, check_len, CloudParams, CloudPoints, CodeError};
use crate::dl::{DlCode, DlCodeword, DlParams};
use crate::gf::Gf;
use crate::linalg::GfMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("evaluation points collide: {0}")]
    PointCollision(String),
    #[error("cloud {0} cannot be recovered from its stored codeword")]
    TargetUndecodable(usize),
    #[error(transparent)]
    Code(#[from] CodeError),
}

/// A party in the scale-out exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Existing or new local cloud, 0-based.
    Local(usize),
    Central,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub from: Node,
    pub to: Node,
    pub label: String,
    pub symbols: Vec<Gf>,
}

/// Fresh column points for scale-out: `appended[i]` extends cloud `i`'s
/// column list by `delta_{p+1}` points, `new_cloud` gives the added cloud.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleOutPoints {
    pub appended: Vec<Vec<Gf>>,
    pub new_cloud: CloudPoints,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleOutPlan {
    pub new_params: CloudParams,
    pub a_new: GfMatrix,
    pub u_new: GfMatrix,
    /// `B_{p+1,i}` for each existing cloud.
    pub b_from_new: Vec<GfMatrix>,
    /// `B_{i,p+1}` for each existing cloud.
    pub b_to_new: Vec<GfMatrix>,
    pub messages: Vec<ProtocolMessage>,
}

impl ScaleOutPlan {
    pub fn symbols_exchanged(&self) -> usize {
        self.messages.iter().map(|m| m.symbols.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ScaleOut {
    pub code: DlCode,
    pub codeword: DlCodeword,
    pub plan: ScaleOutPlan,
}

/// Default fresh points: field elements unused by any existing cloud for the
/// appended columns, and the default sequence for the new cloud.
pub fn default_scale_out_points(code: &DlCode, new: CloudParams) -> ScaleOutPoints {
    let field = code.field();
    let used: Vec<Gf> =
        code.points().iter().flat_map(|p| p.a.iter().chain(&p.b).copied()).collect();
    let fresh: Vec<Gf> =
        field.point_sequence().filter(|g| !used.contains(g)).take(new.delta).collect();
    let delta = code.params().delta();
    ScaleOutPoints {
        appended: vec![fresh; code.p()],
        new_cloud: CloudPoints::consecutive(field, new.k + new.delta, new.r() + delta),
    }
}

/// Adds cloud `p+1` holding `message`, updating the stored parities through
/// the central cloud. Existing encoders are not rebuilt.
pub fn scale_out(
    code: &DlCode,
    stored: &DlCodeword,
    new: CloudParams,
    points: Option<ScaleOutPoints>,
    message: &[Gf],
) -> Result<ScaleOut, DynamicsError> {
    let p = code.p();
    check_len("stored segments", p, stored.segments.len())?;
    check_len("new message", new.k, message.len())?;
    let mut clouds = code.params().clouds().to_vec();
    clouds.push(new);
    let params = DlParams::new(code.field().clone(), clouds)?;
    let pts = points.unwrap_or_else(|| default_scale_out_points(code, new));
    check_len("appended point lists", p, pts.appended.len())?;

    let mut all_points = Vec::with_capacity(p + 1);
    for (i, old) in code.points().iter().enumerate() {
        check_len(
            &format!("appended points of cloud {}", i + 1),
            new.delta,
            pts.appended[i].len(),
        )?;
        if let Some(g) = pts.appended[i].iter().find(|g| old.a.contains(g) || old.b.contains(g)) {
            return Err(DynamicsError::PointCollision(format!(
                "{g:?} already used by cloud {}",
                i + 1
            )));
        }
        let mut b = old.b.clone();
        b.extend(&pts.appended[i]);
        all_points.push(CloudPoints { a: old.a.clone(), b });
    }
    all_points.push(pts.new_cloud);
    let grown = DlCode::build(params, Some(all_points)).map_err(|e| match e {
        CodeError::Matrix(crate::linalg::MatrixError::DuplicateEvaluationPoint(g)) => {
            DynamicsError::PointCollision(format!("{g:?} repeated in the new cloud's points"))
        }
        other => other.into(),
    })?;

    let central = Node::Central;
    let newcomer = Node::Local(p);
    let mut messages = Vec::new();
    let mut y_new = vec![Gf::ZERO; new.delta];
    let mut codeword = stored.clone();
    let mut updates = Vec::with_capacity(p);
    for i in 0..p {
        let k = code.params().cloud(i).k;
        let to_i = grown.b(p, i).left_mul(message).map_err(CodeError::from)?;
        messages.push(ProtocolMessage {
            from: newcomer,
            to: central,
            label: format!("m{}B{},{}", p + 1, p + 1, i + 1),
            symbols: to_i.clone(),
        });
        let from_i = grown.b(i, p).left_mul(&stored.segments[i][..k]).map_err(CodeError::from)?;
        messages.push(ProtocolMessage {
            from: Node::Local(i),
            to: central,
            label: format!("m{}B{},{}", i + 1, i + 1, p + 1),
            symbols: from_i.clone(),
        });
        add_into(&mut y_new, &from_i);
        updates.push(to_i);
    }
    messages.push(ProtocolMessage {
        from: central,
        to: newcomer,
        label: format!("y{}", p + 1),
        symbols: y_new.clone(),
    });
    for (i, to_i) in updates.into_iter().enumerate() {
        let k = code.params().cloud(i).k;
        // Cloud i folds the new contribution to y_i through its own U_i.
        let delta_parity = code.u(i).left_mul(&to_i).map_err(CodeError::from)?;
        add_into(&mut codeword.segments[i][k..], &delta_parity);
        messages.push(ProtocolMessage {
            from: central,
            to: Node::Local(i),
            label: format!("m{}B{},{}", p + 1, p + 1, i + 1),
            symbols: to_i,
        });
    }
    let mut c_new = message.to_vec();
    let mut parity = grown.a(p).left_mul(message).map_err(CodeError::from)?;
    add_into(&mut parity, &grown.u(p).left_mul(&y_new).map_err(CodeError::from)?);
    c_new.extend(parity);
    codeword.segments.push(c_new);

    let plan = ScaleOutPlan {
        new_params: new,
        a_new: grown.a(p).clone(),
        u_new: grown.u(p).clone(),
        b_from_new: (0..p).map(|i| grown.b(p, i).clone()).collect(),
        b_to_new: (0..p).map(|i| grown.b(i, p).clone()).collect(),
        messages,
    };
    Ok(ScaleOut { code: grown, codeword, plan })
}

/// How to divide one cloud: `(k, r, delta)` of each half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub target: usize,
    pub a: CloudParams,
    pub b: CloudParams,
}

/// Every matrix of the two new clouds, sliced from the target's old blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub spec: SplitSpec,
    pub a_aa: GfMatrix,
    pub b_ba: GfMatrix,
    pub a_bb: GfMatrix,
    pub b_ab: GfMatrix,
    pub u_a: GfMatrix,
    pub u_b: GfMatrix,
    /// `B_{1a,i}` and `B_{1b,i}` for every other cloud `i` (empty at the target).
    pub b_a_out: Vec<GfMatrix>,
    pub b_b_out: Vec<GfMatrix>,
    /// `B_{i,1a}` and `B_{i,1b}`.
    pub b_a_in: Vec<GfMatrix>,
    pub b_b_in: Vec<GfMatrix>,
    pub y_a: Vec<Gf>,
    pub y_b: Vec<Gf>,
}

impl SplitPlan {
    fn slice(code: &DlCode, spec: SplitSpec) -> Self {
        let x = spec.target;
        let (ka, ra, da) = (spec.a.k, spec.a.r(), spec.a.delta);
        let c = code.params().cloud(x);
        let (k, r, d1) = (c.k, c.r(), c.delta);
        let db = spec.b.delta;
        let a11 = code.a(x);
        let u1 = code.u(x);
        let others = 0..code.p();
        let empty = || GfMatrix::zeros(code.field(), 0, 0);
        SplitPlan {
            spec,
            a_aa: a11.slice_inclusive(1, ka, 1, ra),
            b_ba: a11.slice_inclusive(ka + 1, k, 1, da),
            a_bb: a11.slice_inclusive(ka + 1, k, ra + 1, r),
            b_ab: a11.slice_inclusive(1, ka, ra + 1, ra + db),
            u_a: u1.slice_inclusive(1, da, 1, ra),
            u_b: u1.slice_inclusive(da + 1, d1, ra + 1, r),
            b_a_out: others
                .clone()
                .map(|i| {
                    if i == x {
                        empty()
                    } else {
                        code.b(x, i).block(0, 0, ka, code.b(x, i).cols())
                    }
                })
                .collect(),
            b_b_out: others
                .clone()
                .map(|i| {
                    if i == x {
                        empty()
                    } else {
                        code.b(x, i).block(ka, 0, k - ka, code.b(x, i).cols())
                    }
                })
                .collect(),
            b_a_in: others
                .clone()
                .map(|i| {
                    if i == x {
                        empty()
                    } else {
                        code.b(i, x).block(0, 0, code.b(i, x).rows(), da)
                    }
                })
                .collect(),
            b_b_in: others
                .map(|i| {
                    if i == x {
                        empty()
                    } else {
                        code.b(i, x).block(0, da, code.b(i, x).rows(), d1 - da)
                    }
                })
                .collect(),
            y_a: Vec::new(),
            y_b: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub code: DlCode,
    pub codeword: DlCodeword,
    pub plan: SplitPlan,
}

fn check_split(code: &DlCode, spec: &SplitSpec) -> Result<(), DynamicsError> {
    let x = spec.target;
    if x >= code.p() {
        return Err(CodeError::UnknownCloud(x).into());
    }
    let c = code.params().cloud(x);
    let (a, b) = (spec.a, spec.b);
    if a.n < a.k || b.n < b.k {
        return Err(DynamicsError::DimensionMismatch("n must be at least k".into()));
    }
    if a.k == 0 || b.k == 0 {
        return Err(DynamicsError::DimensionMismatch("both halves need k >= 1".into()));
    }
    if a.k + b.k != c.k || a.r() + b.r() != c.r() || a.delta + b.delta != c.delta {
        return Err(DynamicsError::DimensionMismatch(format!(
            "halves ({},{},{}) + ({},{},{}) do not add up to cloud {} ({},{},{})",
            a.k,
            a.r(),
            a.delta,
            b.k,
            b.r(),
            b.delta,
            x + 1,
            c.k,
            c.r(),
            c.delta
        )));
    }
    if a.delta > a.r() || b.delta > b.r() {
        return Err(DynamicsError::DimensionMismatch("each half needs delta <= r".into()));
    }
    Ok(())
}

/// Point lists of the two halves. The halves sit at positions `x` and `x+1`
/// of the new code; every other cloud keeps its points, because its `B`
/// segment for the old cloud divides into the two new segments in order.
fn split_points(code: &DlCode, spec: &SplitSpec) -> Vec<CloudPoints> {
    let x = spec.target;
    let c = code.params().cloud(x);
    let (k, r) = (c.k, c.r());
    let (ka, ra, da) = (spec.a.k, spec.a.r(), spec.a.delta);
    let db = spec.b.delta;
    let old = &code.points()[x];
    // B-column segments of T_x, one per other cloud.
    let mut segments = Vec::with_capacity(code.p());
    let mut col = r;
    for y in 0..code.p() {
        let w = if y == x { 0 } else { code.params().cloud(y).delta };
        segments.push(&old.b[col..col + w]);
        col += w;
    }
    let before: Vec<Gf> = segments[..x].concat();
    let after: Vec<Gf> = segments[x + 1..].concat();

    let mut a_pts = old.a[..ka].to_vec();
    a_pts.extend(&old.a[k..k + da]);
    let mut b_pts = old.b[..ra].to_vec();
    b_pts.extend(&before);
    b_pts.extend(&old.b[ra..ra + db]);
    b_pts.extend(&after);
    let half_a = CloudPoints { a: a_pts, b: b_pts };

    let mut a_pts = old.a[ka..k].to_vec();
    a_pts.extend(&old.a[k + da..k + c.delta]);
    let mut b_pts = old.b[ra..r].to_vec();
    b_pts.extend(&before);
    b_pts.extend(&old.b[..da]);
    b_pts.extend(&after);
    let half_b = CloudPoints { a: a_pts, b: b_pts };

    let mut points = code.points().to_vec();
    points.splice(x..=x, [half_a, half_b]);
    points
}

/// Splits cloud `spec.target` into two clouds placed at `target` and
/// `target + 1`. Only the target's stored codeword is rewritten.
pub fn split(code: &DlCode, stored: &DlCodeword, spec: SplitSpec) -> Result<Split, DynamicsError> {
    check_split(code, &spec)?;
    check_len("stored segments", code.p(), stored.segments.len())?;
    let x = spec.target;
    let c = *code.params().cloud(x);
    check_len("stored target codeword", c.n, stored.segments[x].len())?;

    let mut clouds = code.params().clouds().to_vec();
    clouds.splice(x..=x, [spec.a, spec.b]);
    let params = DlParams::new(code.field().clone(), clouds)?;
    let new_code = DlCode::build(params, Some(split_points(code, &spec)))?;

    let mut plan = SplitPlan::slice(code, spec);
    let word = &stored.segments[x];
    let (m, parity) = word.split_at(c.k);
    let mut rest = parity.to_vec();
    add_into(&mut rest, &code.a(x).left_mul(m).map_err(CodeError::from)?);
    let y1 = code.u(x).solve_left(&rest).map_err(|_| DynamicsError::TargetUndecodable(x))?;
    let (ma, mb) = m.split_at(spec.a.k);
    plan.y_a = y1[..spec.a.delta].to_vec();
    plan.y_b = y1[spec.a.delta..].to_vec();

    let half = |mine: &[Gf], a: &GfMatrix, other: &[Gf], b: &GfMatrix, y: &[Gf], u: &GfMatrix| {
        let mut ya = b.left_mul(other)?;
        add_into(&mut ya, y);
        let mut par = a.left_mul(mine)?;
        add_into(&mut par, &u.left_mul(&ya)?);
        let mut cw = mine.to_vec();
        cw.extend(par);
        Ok::<_, crate::linalg::MatrixError>(cw)
    };
    let ca = half(ma, &plan.a_aa, mb, &plan.b_ba, &plan.y_a, &plan.u_a).map_err(CodeError::from)?;
    let cb = half(mb, &plan.a_bb, ma, &plan.b_ab, &plan.y_b, &plan.u_b).map_err(CodeError::from)?;
    let mut codeword = stored.clone();
    codeword.segments.splice(x..=x, [ca, cb]);
    Ok(Split { code: new_code, codeword, plan })
}
