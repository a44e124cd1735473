//! Triple-level code with hierarchical locality.
//!
//! Clouds are arranged in groups; cloud `(x, i)` owns a Cauchy matrix
//! `T_xi` of shape `u_xi x v_xi` partitioned as
//!
//! ```text
//! T_xi = [ A_xx;ii | B_xx;i | E_x1;i .. E_xp0;i ]   (k rows; E_xx;i omitted)
//!        [ U_xi    | Z_xi                        ]   (delta_xi rows)
//!        [ V_xi    |                             ]   (2 gamma_x rows)
//! ```
//!
//! The rows/columns covering `A`, `B` and `U` form a double-level code per
//! group (built with [`DlCode`]); `E` and `V` add the global cross parities
//! `z`. Each group stores `two_gamma = 2 gamma_x` as an integer.
//!
//! Two layouts for the `z` slots exist. With integral `gamma_x` a group has
//! one slot per cloud, each `gamma_x` wide, and cloud `i` carries slots
//! `i` and `i + 1` (wrapping to the first). With half-integral `gamma_x`
//! and an even cloud count, a group has `p_x / 2` slots of width `2 gamma_x`
//! and clouds `2s - 1`, `2s` share slot `s`.

use serde::{Deserialize, Serialize};

use crate::code::{
    add_into, check_budget, check_len, solver_error, AccessLevel, CloudParams, CloudPoints,
    CodeError, DecodeTrace, Decoded, DistanceMatrix,
};
use crate::dl::{erased_values, DlCode, DlParams};
use crate::gf::{Field, Gf};
use crate::linalg::{solve_erasures, stack_parity, CauchyMatrix, GfMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossScheme {
    /// One slot per cloud; cloud `i` uses slots `i` and `i + 1`.
    Overlap,
    /// `p_x / 2` slots; consecutive cloud pairs share one slot.
    Paired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlGroup {
    pub two_gamma: usize,
    pub clouds: Vec<CloudParams>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlParams {
    field: Field,
    groups: Vec<TlGroup>,
}

impl TlParams {
    pub fn new(field: Field, groups: Vec<TlGroup>) -> Result<Self, CodeError> {
        if groups.is_empty() {
            return Err(CodeError::InvalidParams("at least one group is required".into()));
        }
        for (x, g) in groups.iter().enumerate() {
            if g.clouds.is_empty() {
                return Err(CodeError::InvalidParams(format!("group {} has no clouds", x + 1)));
            }
            for (i, c) in g.clouds.iter().enumerate() {
                if c.k == 0 || c.n <= c.k {
                    return Err(CodeError::InvalidParams(format!(
                        "cloud ({},{}): need 0 < k < n, got n = {}, k = {}",
                        x + 1,
                        i + 1,
                        c.n,
                        c.k
                    )));
                }
                if c.delta >= c.r() {
                    return Err(CodeError::InvalidParams(format!(
                        "cloud ({},{}): delta = {} must be below r = {}",
                        x + 1,
                        i + 1,
                        c.delta,
                        c.r()
                    )));
                }
            }
            let limit = g.clouds.iter().map(|c| c.r() - c.delta).min().unwrap_or(0);
            if g.two_gamma >= limit {
                return Err(CodeError::GammaTooLarge {
                    group: x + 1,
                    two_gamma: g.two_gamma,
                    limit,
                });
            }
            if g.two_gamma % 2 == 1 && g.clouds.len() % 2 == 1 {
                return Err(CodeError::OddGroupHalfGamma { group: x + 1, clouds: g.clouds.len() });
            }
            if g.clouds.len() == 1 && g.two_gamma > 0 {
                return Err(CodeError::InvalidParams(format!(
                    "group {}: a single-cloud group cannot carry global cross parities",
                    x + 1
                )));
            }
            if g.clouds.iter().all(|c| c.delta == 0) {
                return Err(CodeError::InvalidParams(format!(
                    "group {}: total delta must be positive",
                    x + 1
                )));
            }
        }
        let params = TlParams { field, groups };
        let required = params.required_field_size();
        if params.field.order() < required {
            return Err(CodeError::FieldTooSmall { required, available: params.field.order() });
        }
        Ok(params)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn groups(&self) -> &[TlGroup] {
        &self.groups
    }

    pub fn p0(&self) -> usize {
        self.groups.len()
    }

    /// Number of clouds in group `x`.
    pub fn p(&self, x: usize) -> usize {
        self.groups[x].clouds.len()
    }

    pub fn cloud(&self, x: usize, i: usize) -> &CloudParams {
        &self.groups[x].clouds[i]
    }

    pub fn two_gamma(&self, x: usize) -> usize {
        self.groups[x].two_gamma
    }

    /// `delta_x`, the cross-parity budget of group `x`.
    pub fn group_delta(&self, x: usize) -> usize {
        self.groups[x].clouds.iter().map(|c| c.delta).sum()
    }

    /// `p_x gamma_x`: total width of the `E` columns other groups spend on group `x`.
    pub fn cross_width(&self, x: usize) -> usize {
        self.p(x) * self.two_gamma(x) / 2
    }

    /// `gamma = sum_x p_x gamma_x`.
    pub fn gamma(&self) -> usize {
        (0..self.p0()).map(|x| self.cross_width(x)).sum()
    }

    pub fn scheme(&self, x: usize) -> CrossScheme {
        if self.two_gamma(x) % 2 == 1 {
            CrossScheme::Paired
        } else {
            CrossScheme::Overlap
        }
    }

    /// Number of `z` slots of group `x`.
    pub fn slot_count(&self, x: usize) -> usize {
        match self.scheme(x) {
            CrossScheme::Overlap => self.p(x),
            CrossScheme::Paired => self.p(x) / 2,
        }
    }

    /// Width of each `z` slot of group `x`.
    pub fn slot_width(&self, x: usize) -> usize {
        match self.scheme(x) {
            CrossScheme::Overlap => self.two_gamma(x) / 2,
            CrossScheme::Paired => self.two_gamma(x),
        }
    }

    /// Slots whose concatenation multiplies `V_xi`.
    pub fn slots(&self, x: usize, i: usize) -> Vec<usize> {
        match self.scheme(x) {
            CrossScheme::Overlap => vec![i, (i + 1) % self.p(x)],
            CrossScheme::Paired => vec![i / 2],
        }
    }

    pub fn t_shape(&self, x: usize, i: usize) -> (usize, usize) {
        let c = self.cloud(x, i);
        let u = c.k + c.delta + self.two_gamma(x);
        let v = c.r() - c.delta + self.group_delta(x) + self.gamma() - self.cross_width(x);
        (u, v)
    }

    pub fn required_field_size(&self) -> usize {
        self.cloud_ids()
            .map(|(x, i)| {
                let (u, v) = self.t_shape(x, i);
                u + v
            })
            .max()
            .unwrap_or(0)
    }

    pub fn d1(&self, x: usize, i: usize) -> usize {
        let c = self.cloud(x, i);
        c.r() - c.delta - self.two_gamma(x) + 1
    }

    pub fn d2(&self, x: usize, i: usize) -> usize {
        let c = self.cloud(x, i);
        c.r() - c.delta + self.group_delta(x) + 1
    }

    pub fn d3(&self, x: usize, i: usize) -> usize {
        self.t_shape(x, i).1 + 1
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        let ids: Vec<_> = self.cloud_ids().collect();
        DistanceMatrix {
            rows: vec![
                ids.iter().map(|&(x, i)| self.d1(x, i)).collect(),
                ids.iter().map(|&(x, i)| self.d2(x, i)).collect(),
                ids.iter().map(|&(x, i)| self.d3(x, i)).collect(),
            ],
            group_sizes: (0..self.p0()).map(|x| self.p(x)).collect(),
        }
    }

    /// All `(group, cloud)` pairs in codeword order.
    pub fn cloud_ids(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.p0()).flat_map(move |x| (0..self.p(x)).map(move |i| (x, i)))
    }

    pub fn cloud_count(&self) -> usize {
        self.groups.iter().map(|g| g.clouds.len()).sum()
    }

    pub fn flat_index(&self, x: usize, i: usize) -> usize {
        self.groups[..x].iter().map(|g| g.clouds.len()).sum::<usize>() + i
    }

    pub fn locate(&self, flat: usize) -> Option<(usize, usize)> {
        self.cloud_ids().nth(flat)
    }

    fn group_params(&self, x: usize) -> Result<DlParams, CodeError> {
        DlParams::new(self.field.clone(), self.groups[x].clouds.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct TlCloud {
    t: CauchyMatrix,
    v: GfMatrix,
    // e[y][s] = E_{x,y;i;s}; e[x] is empty.
    e: Vec<Vec<GfMatrix>>,
    h_local: GfMatrix,
    h_global: GfMatrix,
}

/// Codeword segments indexed `[group][cloud]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlCodeword {
    pub segments: Vec<Vec<Vec<Gf>>>,
}

impl TlCodeword {
    pub fn get(&self, x: usize, i: usize) -> &[Gf] {
        &self.segments[x][i]
    }

    pub fn flatten(&self) -> Vec<Gf> {
        self.segments.iter().flatten().flatten().copied().collect()
    }
}

/// Decoded codewords of other clouds, indexed `[group][cloud]`.
pub type KnownClouds = Vec<Vec<Option<Vec<Gf>>>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlCode {
    params: TlParams,
    points: Vec<Vec<CloudPoints>>,
    groups: Vec<DlCode>,
    clouds: Vec<Vec<TlCloud>>,
}

impl TlCode {
    pub fn build(
        params: TlParams,
        points: Option<Vec<Vec<CloudPoints>>>,
    ) -> Result<Self, CodeError> {
        let field = params.field().clone();
        let points = match points {
            Some(p) => {
                check_len("point groups", params.p0(), p.len())?;
                for (x, g) in p.iter().enumerate() {
                    check_len(&format!("group {} point sets", x + 1), params.p(x), g.len())?;
                }
                p
            }
            None => (0..params.p0())
                .map(|x| {
                    (0..params.p(x))
                        .map(|i| {
                            let (u, v) = params.t_shape(x, i);
                            CloudPoints::consecutive(&field, u, v)
                        })
                        .collect()
                })
                .collect(),
        };

        let mut groups = Vec::with_capacity(params.p0());
        let mut clouds = Vec::with_capacity(params.p0());
        for x in 0..params.p0() {
            let gp = params.group_params(x)?;
            let mut group_points = Vec::with_capacity(params.p(x));
            let mut group_clouds = Vec::with_capacity(params.p(x));
            for i in 0..params.p(x) {
                let c = *params.cloud(x, i);
                let (u, v) = params.t_shape(x, i);
                let pts = &points[x][i];
                check_len(&format!("cloud ({},{}) row points", x + 1, i + 1), u, pts.a.len())?;
                check_len(&format!("cloud ({},{}) column points", x + 1, i + 1), v, pts.b.len())?;
                let t = CauchyMatrix::new(&field, &pts.a, &pts.b)?;
                let (_, gv) = gp.t_shape(i);
                group_points.push(CloudPoints {
                    a: pts.a[..c.k + c.delta].to_vec(),
                    b: pts.b[..gv].to_vec(),
                });
                let m = t.matrix();
                let (k, r, tg) = (c.k, c.r(), params.two_gamma(x));
                let v_mat = m.block(k + c.delta, 0, tg, r);
                let mut col = gv;
                let mut e = Vec::with_capacity(params.p0());
                for y in 0..params.p0() {
                    if y == x {
                        e.push(Vec::new());
                        continue;
                    }
                    let w = params.slot_width(y);
                    let mut blocks = Vec::with_capacity(params.slot_count(y));
                    for _ in 0..params.slot_count(y) {
                        blocks.push(m.block(0, col, k, w));
                        col += w;
                    }
                    e.push(blocks);
                }
                debug_assert_eq!(col, m.cols());
                let a = m.block(0, 0, k, r);
                let uv = m.block(k, 0, c.delta + tg, r);
                let h_local =
                    GfMatrix::vstack(&[&a, &GfMatrix::identity(&field, r), &uv])?.transpose();
                let h_global = stack_parity(&m.block(0, 0, k, m.cols()), r);
                group_clouds.push(TlCloud { t, v: v_mat, e, h_local, h_global });
            }
            groups.push(DlCode::build(gp, Some(group_points))?);
            clouds.push(group_clouds);
        }
        Ok(TlCode { params, points, groups, clouds })
    }

    pub fn params(&self) -> &TlParams {
        &self.params
    }

    pub fn field(&self) -> &Field {
        self.params.field()
    }

    pub fn points(&self) -> &[Vec<CloudPoints>] {
        &self.points
    }

    /// The double-level code formed by group `x` (the `F_xx` block).
    pub fn group_code(&self, x: usize) -> &DlCode {
        &self.groups[x]
    }

    pub fn t(&self, x: usize, i: usize) -> &CauchyMatrix {
        &self.clouds[x][i].t
    }

    pub fn a(&self, x: usize, i: usize) -> &GfMatrix {
        self.groups[x].a(i)
    }

    /// `B_{x,x;i,i'}`.
    pub fn b(&self, x: usize, i: usize, i2: usize) -> &GfMatrix {
        self.groups[x].b(i, i2)
    }

    pub fn u(&self, x: usize, i: usize) -> &GfMatrix {
        self.groups[x].u(i)
    }

    pub fn v(&self, x: usize, i: usize) -> &GfMatrix {
        &self.clouds[x][i].v
    }

    /// `E_{x,y;i;s}` for `y != x`.
    pub fn e(&self, x: usize, i: usize, y: usize, s: usize) -> &GfMatrix {
        &self.clouds[x][i].e[y][s]
    }

    pub fn h_local(&self, x: usize, i: usize) -> &GfMatrix {
        &self.clouds[x][i].h_local
    }

    pub fn h_global(&self, x: usize, i: usize) -> &GfMatrix {
        &self.clouds[x][i].h_global
    }

    /// Generator block between cloud `(x, i)` (rows) and `(y, j)` (parity columns).
    pub fn cross_block(&self, x: usize, i: usize, y: usize, j: usize) -> GfMatrix {
        if x == y {
            return self.groups[x].cross_block(i, j);
        }
        let e: Vec<&GfMatrix> =
            self.params.slots(y, j).into_iter().map(|s| self.e(x, i, y, s)).collect();
        GfMatrix::hstack(&e)
            .and_then(|e| e.mul_mat(self.v(y, j)))
            .expect("slot widths add up to 2 gamma_y")
    }

    pub fn generator(&self) -> GfMatrix {
        let ids: Vec<_> = self.params.cloud_ids().collect();
        let field = self.field();
        let rows = ids.iter().map(|&(x, i)| self.params.cloud(x, i).k).sum();
        let cols = ids.iter().map(|&(x, i)| self.params.cloud(x, i).n).sum();
        let mut g = GfMatrix::zeros(field, rows, cols);
        let mut r0 = 0;
        for &(x, i) in &ids {
            let k = self.params.cloud(x, i).k;
            let mut c0 = 0;
            for &(y, j) in &ids {
                let cj = self.params.cloud(y, j);
                if (x, i) == (y, j) {
                    g.paste(r0, c0, &GfMatrix::identity(field, k));
                }
                g.paste(r0, c0 + cj.k, &self.cross_block(x, i, y, j));
                c0 += cj.n;
            }
            r0 += k;
        }
        g
    }

    fn check_cloud(&self, x: usize, i: usize) -> Result<(), CodeError> {
        if x < self.params.p0() && i < self.params.p(x) {
            Ok(())
        } else {
            Err(CodeError::UnknownCloud(self.params.cloud_count() + x * 1000 + i))
        }
    }

    /// `z_{y,s} = sum over clouds (x,i) outside group y of m_xi E_{x,y;i;s}`,
    /// optionally leaving out one cloud.
    fn slot_value(
        &self,
        y: usize,
        s: usize,
        messages: &[Vec<&[Gf]>],
        skip: Option<(usize, usize)>,
    ) -> Result<Vec<Gf>, CodeError> {
        let mut z = vec![Gf::ZERO; self.params.slot_width(y)];
        for (x, i) in self.params.cloud_ids() {
            if x == y || Some((x, i)) == skip {
                continue;
            }
            add_into(&mut z, &self.e(x, i, y, s).left_mul(messages[x][i])?);
        }
        Ok(z)
    }

    fn z_pair_from_slots(&self, x: usize, i: usize, slots: &[Vec<Gf>]) -> Vec<Gf> {
        self.params.slots(x, i).into_iter().flat_map(|s| slots[s].clone()).collect()
    }

    pub fn encode(&self, messages: &[Vec<Vec<Gf>>]) -> Result<TlCodeword, CodeError> {
        check_len("group count", self.params.p0(), messages.len())?;
        for (x, g) in messages.iter().enumerate() {
            check_len(&format!("group {} message count", x + 1), self.params.p(x), g.len())?;
        }
        let refs: Vec<Vec<&[Gf]>> =
            messages.iter().map(|g| g.iter().map(Vec::as_slice).collect()).collect();
        let mut segments = Vec::with_capacity(self.params.p0());
        for x in 0..self.params.p0() {
            let inner = self.groups[x].encode(&messages[x])?;
            let slots: Vec<Vec<Gf>> = (0..self.params.slot_count(x))
                .map(|s| self.slot_value(x, s, &refs, None))
                .collect::<Result<_, _>>()?;
            let mut group = Vec::with_capacity(self.params.p(x));
            for (i, mut c) in inner.segments.into_iter().enumerate() {
                let k = self.params.cloud(x, i).k;
                let zv = self.v(x, i).left_mul(&self.z_pair_from_slots(x, i, &slots))?;
                add_into(&mut c[k..], &zv);
                group.push(c);
            }
            segments.push(group);
        }
        Ok(TlCodeword { segments })
    }

    /// Splits the parity of a decoded codeword of cloud `(x, i)` into the
    /// local cross parity `y_xi` and its z-pair, using the fact that the
    /// stacked `[U_xi ; V_xi]` has full row rank.
    fn cross_parities(
        &self,
        x: usize,
        i: usize,
        codeword: &[Gf],
    ) -> Result<(Vec<Gf>, Vec<Gf>), CodeError> {
        let c = self.params.cloud(x, i);
        check_len(&format!("decoded cloud ({},{})", x + 1, i + 1), c.n, codeword.len())?;
        let mut rest = codeword[c.k..].to_vec();
        add_into(&mut rest, &self.a(x, i).left_mul(&codeword[..c.k])?);
        let stacked = GfMatrix::vstack(&[self.u(x, i), self.v(x, i)])?;
        let both = stacked.solve_left(&rest).map_err(|e| {
            CodeError::Inconsistent(format!("cross parities of cloud ({},{}): {e}", x + 1, i + 1))
        })?;
        let (y, z) = both.split_at(c.delta);
        Ok((y.to_vec(), z.to_vec()))
    }

    fn received_len(&self, x: usize, i: usize, received: &[Option<Gf>]) -> Result<(), CodeError> {
        check_len(
            &format!("received word of cloud ({},{})", x + 1, i + 1),
            self.params.cloud(x, i).n,
            received.len(),
        )
    }

    /// Local decode of cloud `(x, i)`: corrects up to `d1 - 1` erasures.
    pub fn decode_local(
        &self,
        x: usize,
        i: usize,
        received: &[Option<Gf>],
    ) -> Result<Decoded, CodeError> {
        self.check_cloud(x, i)?;
        self.received_len(x, i, received)?;
        let c = *self.params.cloud(x, i);
        check_budget(AccessLevel::Local, received, self.params.d1(x, i) - 1)?;
        let mut extended = received.to_vec();
        extended.extend(std::iter::repeat_n(None, c.delta + self.params.two_gamma(x)));
        let filled = solve_erasures(self.h_local(x, i), &extended, &vec![Gf::ZERO; c.r()])
            .map_err(|e| solver_error(AccessLevel::Local, e))?;
        let mut trace = DecodeTrace::new(AccessLevel::Local, format!("H^L_{},{}", x + 1, i + 1));
        trace.push(format!("y{},{}", x + 1, i + 1), &filled[c.n..c.n + c.delta]);
        trace.push(format!("zpair{},{}", x + 1, i + 1), &filled[c.n + c.delta..]);
        let codeword = filled[..c.n].to_vec();
        trace.push("filled", &erased_values(received, &codeword));
        Ok(Decoded { message: codeword[..c.k].to_vec(), codeword, trace })
    }

    /// Middle-level decode of cloud `(x, i)` using the decoded codewords of
    /// every other cloud in group `x` (`siblings[i]` is ignored). Corrects up
    /// to `d2 - 1` erasures.
    pub fn decode_middle(
        &self,
        x: usize,
        i: usize,
        received: &[Option<Gf>],
        siblings: &[Option<Vec<Gf>>],
    ) -> Result<Decoded, CodeError> {
        self.check_cloud(x, i)?;
        self.received_len(x, i, received)?;
        check_len("group sibling list", self.params.p(x), siblings.len())?;
        let c = *self.params.cloud(x, i);
        let budget = (self.params.d2(x, i) - 1).min(c.n);
        check_budget(AccessLevel::Middle, received, budget)?;

        let mut trace =
            DecodeTrace::new(AccessLevel::Middle, format!("H^G_{} of group {}", i + 1, x + 1));
        let mut slots: Vec<Option<Vec<Gf>>> = vec![None; self.params.slot_count(x)];
        let mut reduced_siblings = vec![None; self.params.p(x)];
        for i2 in (0..self.params.p(x)).filter(|&i2| i2 != i) {
            let word = siblings[i2]
                .as_ref()
                .ok_or(CodeError::SiblingsUndecoded(self.params.flat_index(x, i2)))?;
            let (y, zpair) = self.cross_parities(x, i2, word)?;
            trace.push(format!("y{},{}", x + 1, i2 + 1), &y);
            trace.push(format!("z{},{}", x + 1, i2 + 1), &zpair);
            self.record_slots(x, i2, &zpair, &mut slots)?;
            let k2 = self.params.cloud(x, i2).k;
            let mut reduced = word.clone();
            add_into(&mut reduced[k2..], &self.v(x, i2).left_mul(&zpair)?);
            reduced_siblings[i2] = Some(reduced);
        }
        for (s, z) in slots.iter().enumerate() {
            if let Some(z) = z {
                trace.push(format!("slot{},{}", x + 1, s + 1), z);
            }
        }
        let mut zpair = Vec::new();
        for s in self.params.slots(x, i) {
            let z = slots[s].as_ref().ok_or_else(|| {
                CodeError::Inconsistent(format!(
                    "slot {} of group {} not recoverable",
                    s + 1,
                    x + 1
                ))
            })?;
            zpair.extend(z);
        }
        let zv = self.v(x, i).left_mul(&zpair)?;
        trace.push("zV", &zv);

        let mut reduced = received.to_vec();
        for (j, s) in reduced[c.k..].iter_mut().enumerate() {
            if let Some(v) = s {
                *v += zv[j];
            }
        }
        let inner = self.groups[x].decode_global(i, &reduced, &reduced_siblings)?;
        let mut correction = zv.clone();
        if let Some(yu) = inner.trace.get(&format!("y{}U{}", i + 1, i + 1)) {
            add_into(&mut correction, yu);
        }
        trace.push("correction", &correction);
        for step in inner.trace.steps.iter().filter(|s| s.label != "filled") {
            trace.push(step.label.clone(), &step.values);
        }
        let mut codeword = inner.codeword;
        add_into(&mut codeword[c.k..], &zv);
        trace.push("filled", &erased_values(received, &codeword));
        Ok(Decoded { message: codeword[..c.k].to_vec(), codeword, trace })
    }

    fn record_slots(
        &self,
        x: usize,
        i: usize,
        zpair: &[Gf],
        slots: &mut [Option<Vec<Gf>>],
    ) -> Result<(), CodeError> {
        let w = self.params.slot_width(x);
        for (n, s) in self.params.slots(x, i).into_iter().enumerate() {
            let part = zpair[n * w..(n + 1) * w].to_vec();
            match &slots[s] {
                Some(prev) if *prev != part => {
                    return Err(CodeError::Inconsistent(format!(
                        "clouds of group {} disagree on slot {}",
                        x + 1,
                        s + 1
                    )))
                }
                _ => slots[s] = Some(part),
            }
        }
        Ok(())
    }

    /// Global decode of cloud `(x, i)` given the decoded codewords of every
    /// other cloud. Corrects up to `d3 - 1` erasures.
    pub fn decode_global(
        &self,
        x: usize,
        i: usize,
        received: &[Option<Gf>],
        others: &KnownClouds,
    ) -> Result<Decoded, CodeError> {
        self.check_cloud(x, i)?;
        self.received_len(x, i, received)?;
        check_len("group list", self.params.p0(), others.len())?;
        let c = *self.params.cloud(x, i);
        let budget = (self.params.d3(x, i) - 1).min(c.n);
        check_budget(AccessLevel::Global, received, budget)?;

        let mut words: Vec<Vec<&[Gf]>> = Vec::with_capacity(self.params.p0());
        for (y, g) in others.iter().enumerate() {
            check_len(&format!("group {} cloud list", y + 1), self.params.p(y), g.len())?;
            let mut row = Vec::with_capacity(g.len());
            for (j, w) in g.iter().enumerate() {
                if (y, j) == (x, i) {
                    row.push(&[][..]);
                    continue;
                }
                let w = w
                    .as_deref()
                    .ok_or(CodeError::SiblingsUndecoded(self.params.flat_index(y, j)))?;
                check_len(
                    &format!("decoded cloud ({},{})", y + 1, j + 1),
                    self.params.cloud(y, j).n,
                    w.len(),
                )?;
                row.push(w);
            }
            words.push(row);
        }
        let messages: Vec<Vec<&[Gf]>> = words
            .iter()
            .enumerate()
            .map(|(y, g)| {
                g.iter()
                    .enumerate()
                    .map(
                        |(j, w)| {
                            if (y, j) == (x, i) {
                                *w
                            } else {
                                &w[..self.params.cloud(y, j).k]
                            }
                        },
                    )
                    .collect()
            })
            .collect();

        let mut trace = DecodeTrace::new(AccessLevel::Global, format!("H^G3_{},{}", x + 1, i + 1));
        // Cross parities and slot values carried by every other cloud.
        let mut cross_y = vec![Vec::new(); self.params.p(x)];
        let mut slots: Vec<Vec<Option<Vec<Gf>>>> =
            (0..self.params.p0()).map(|y| vec![None; self.params.slot_count(y)]).collect();
        for (y, j) in self.params.cloud_ids().filter(|&id| id != (x, i)) {
            let (yy, zpair) = self.cross_parities(y, j, words[y][j])?;
            if y == x {
                cross_y[j] = yy;
            }
            self.record_slots(y, j, &zpair, &mut slots[y])?;
        }

        let mut y_target = vec![Gf::ZERO; c.delta];
        for i2 in (0..self.params.p(x)).filter(|&i2| i2 != i) {
            add_into(&mut y_target, &self.b(x, i2, i).left_mul(messages[x][i2])?);
        }
        let own_slots: Vec<Vec<Gf>> = (0..self.params.slot_count(x))
            .map(|s| self.slot_value(x, s, &messages, Some((x, i))))
            .collect::<Result<_, _>>()?;
        let zpair = self.z_pair_from_slots(x, i, &own_slots);
        let mut correction = self.u(x, i).left_mul(&y_target)?;
        add_into(&mut correction, &self.v(x, i).left_mul(&zpair)?);
        trace.push("correction", &correction);

        // Syndrome in the column order of T_xi: m_xi B_{x,x;i,i'} then m_xi E_{x,y;i;s}.
        let mut syndrome = Vec::new();
        for i2 in (0..self.params.p(x)).filter(|&i2| i2 != i) {
            let mut part = cross_y[i2].clone();
            for i3 in (0..self.params.p(x)).filter(|&i3| i3 != i && i3 != i2) {
                add_into(&mut part, &self.b(x, i3, i2).left_mul(messages[x][i3])?);
            }
            trace.push(
                format!("m{x1},{i1}B{x1},{x1};{i1},{j1}", x1 = x + 1, i1 = i + 1, j1 = i2 + 1),
                &part,
            );
            syndrome.extend(part);
        }
        for y in (0..self.params.p0()).filter(|&y| y != x) {
            for s in 0..self.params.slot_count(y) {
                let z = slots[y][s].as_ref().ok_or_else(|| {
                    CodeError::Inconsistent(format!(
                        "slot {} of group {} not recoverable",
                        s + 1,
                        y + 1
                    ))
                })?;
                let mut part = z.clone();
                add_into(&mut part, &self.slot_value(y, s, &messages, Some((x, i)))?);
                trace.push(
                    format!("m{},{}E{},{};{};{}", x + 1, i + 1, x + 1, y + 1, i + 1, s + 1),
                    &part,
                );
                syndrome.extend(part);
            }
        }

        let mut reduced = received.to_vec();
        for (j, s) in reduced[c.k..].iter_mut().enumerate() {
            if let Some(v) = s {
                *v += correction[j];
            }
        }
        let mut target = vec![Gf::ZERO; c.r()];
        target.extend(&syndrome);
        let solved = solve_erasures(self.h_global(x, i), &reduced, &target)
            .map_err(|e| solver_error(AccessLevel::Global, e))?;
        trace.push("solved", &erased_values(received, &solved));
        let mut codeword = solved;
        add_into(&mut codeword[c.k..], &correction);
        trace.push("filled", &erased_values(received, &codeword));
        Ok(Decoded { message: codeword[..c.k].to_vec(), codeword, trace })
    }
}
