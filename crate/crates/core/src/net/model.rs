//! The two-head dueling Q-network: object, pose, property and heightmap
//! encoders feeding an object-choice head and a placement head.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{StepInput, LOCAL_FEATURES};
use super::layers::{conv_out, silu, silu_grad, Conv, LayoutBuilder, Linear, Mlp, MlpTrace};
use crate::catalog::PreparedCatalog;
use crate::voxel::Orientation;

/// Raw property inputs are rescaled to order one before embedding.
const PROP_SCALE: [f64; 5] = [1.0, 1.0, 1.0, 1.0 / 8.0, 1.0 / 1000.0];
const POINT_SCALE: f64 = 0.1;
/// Samples per gradient chunk; fixed so results do not depend on threads.
const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimTable {
    pub point_hidden: usize,
    pub point_dim: usize,
    pub pose_dim: usize,
    pub prop_dim: usize,
    pub map_channels: [usize; 2],
    pub map_dim: usize,
    pub head_hidden: usize,
    pub head_layers: usize,
    /// Heightmap size the map encoders are built for.
    pub width: usize,
    pub length: usize,
}

impl DimTable {
    /// Default sizes for a full container.
    pub fn desk(width: usize, length: usize) -> Self {
        DimTable {
            point_hidden: 64,
            point_dim: 64,
            pose_dim: 16,
            prop_dim: 16,
            map_channels: [8, 16],
            map_dim: 64,
            head_hidden: 128,
            head_layers: 2,
            width,
            length,
        }
    }

    /// Smaller network for quick single-core training runs.
    pub fn compact(width: usize, length: usize) -> Self {
        DimTable {
            point_hidden: 32,
            point_dim: 32,
            pose_dim: 8,
            prop_dim: 8,
            map_channels: [4, 8],
            map_dim: 32,
            head_hidden: 64,
            head_layers: 2,
            width,
            length,
        }
    }

    /// A few hundred parameters; for gradient checks.
    pub fn tiny(width: usize, length: usize) -> Self {
        DimTable {
            point_hidden: 3,
            point_dim: 3,
            pose_dim: 2,
            prop_dim: 2,
            map_channels: [1, 2],
            map_dim: 3,
            head_hidden: 4,
            head_layers: 2,
            width,
            length,
        }
    }

    pub fn object_shared_dim(&self) -> usize {
        2 * self.map_dim
    }

    pub fn object_row_dim(&self) -> usize {
        self.point_dim + self.prop_dim + self.map_dim
    }

    pub fn place_shared_dim(&self) -> usize {
        self.point_dim + self.prop_dim + 3 * self.map_dim
    }

    pub fn place_row_dim(&self) -> usize {
        self.pose_dim + LOCAL_FEATURES
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct MapEncoder {
    c1: Conv,
    c2: Conv,
    fc: Linear,
    h: usize,
    w: usize,
}

struct MapTrace {
    z1: Vec<f64>,
    z2: Vec<f64>,
    z3: Vec<f64>,
}

impl MapEncoder {
    fn new(b: &mut LayoutBuilder, d: &DimTable) -> Self {
        let [c1, c2] = d.map_channels;
        let conv1 = b.conv(1, c1);
        let conv2 = b.conv(c1, c2);
        let flat = c2 * conv_out(conv_out(d.length)) * conv_out(conv_out(d.width));
        MapEncoder {
            c1: conv1,
            c2: conv2,
            fc: b.linear(flat, d.map_dim),
            h: d.length,
            w: d.width,
        }
    }

    fn dims1(&self) -> (usize, usize) {
        (conv_out(self.h), conv_out(self.w))
    }

    fn forward(&self, p: &[f64], map: &[f64]) -> (Vec<f64>, MapTrace) {
        let (h1, w1) = self.dims1();
        let (h2, w2) = (conv_out(h1), conv_out(w1));
        let mut z1 = vec![0.0; self.c1.cout * h1 * w1];
        self.c1.forward(p, map, self.h, self.w, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|&v| silu(v)).collect();
        let mut z2 = vec![0.0; self.c2.cout * h2 * w2];
        self.c2.forward(p, &a1, h1, w1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|&v| silu(v)).collect();
        let mut z3 = vec![0.0; self.fc.out];
        self.fc.forward(p, &a2, &mut z3);
        let out = z3.iter().map(|&v| silu(v)).collect();
        (out, MapTrace { z1, z2, z3 })
    }

    fn backward(&self, p: &[f64], map: &[f64], t: &MapTrace, dy: &[f64], g: &mut [f64]) {
        let (h1, w1) = self.dims1();
        let d3: Vec<f64> = dy.iter().zip(&t.z3).map(|(d, &z)| d * silu_grad(z)).collect();
        let a2: Vec<f64> = t.z2.iter().map(|&v| silu(v)).collect();
        self.fc.backward_params(0, &a2, &d3, g, true);
        let mut d2 = vec![0.0; a2.len()];
        self.fc.backward_input(p, 0, &d3, &mut d2);
        for (d, &z) in d2.iter_mut().zip(&t.z2) {
            *d *= silu_grad(z);
        }
        let a1: Vec<f64> = t.z1.iter().map(|&v| silu(v)).collect();
        let mut d1 = vec![0.0; a1.len()];
        self.c2.backward(p, &a1, h1, w1, &d2, g, Some(&mut d1));
        for (d, &z) in d1.iter_mut().zip(&t.z1) {
            *d *= silu_grad(z);
        }
        self.c1.backward(p, map, self.h, self.w, &d1, g, None);
    }
}

/// Value and advantage streams over a set of actions whose inputs are
/// `[shared, row_i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
struct DuelingHead {
    value: Mlp,
    advantage: Mlp,
    shared: usize,
    row: usize,
}

struct HeadTrace {
    value_in: Vec<f64>,
    value: MlpTrace,
    adv: Vec<MlpTrace>,
}

/// `Q_i = V + A_i − mean(A)`.
pub fn dueling_combine(value: f64, advantages: &[f64]) -> Vec<f64> {
    assert!(!advantages.is_empty(), "dueling combine needs at least one action");
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}

impl DuelingHead {
    fn new(b: &mut LayoutBuilder, shared: usize, row: usize, d: &DimTable) -> Self {
        let mut sizes = vec![shared + row];
        sizes.extend(std::iter::repeat_n(d.head_hidden, d.head_layers));
        sizes.push(1);
        DuelingHead {
            value: Mlp::new(b, &sizes, false),
            advantage: Mlp::new(b, &sizes, false),
            shared,
            row,
        }
    }

    /// Returns `(Q, V, A)`.
    fn forward(&self, p: &[f64], shared: &[f64], rows: &[Vec<f64>]) -> (Vec<f64>, f64, Vec<f64>, HeadTrace) {
        let n = rows.len();
        let first = &self.advantage.layers[0];
        let mut base = vec![0.0; first.out];
        first.forward_cols(p, 0, self.shared, shared, &mut base, true);
        let mut adv = Vec::with_capacity(n);
        let mut traces = Vec::with_capacity(n);
        let mut mean_row = vec![0.0; self.row];
        for r in rows {
            let mut pre = base.clone();
            first.forward_cols(p, self.shared, self.row, r, &mut pre, false);
            let (out, tr) = self.advantage.forward_from_pre(p, pre);
            adv.push(out[0]);
            traces.push(tr);
            for (m, v) in mean_row.iter_mut().zip(r) {
                *m += v / n as f64;
            }
        }
        let mut value_in = shared.to_vec();
        value_in.extend_from_slice(&mean_row);
        let (vout, vtr) = self.value.forward(p, &value_in);
        let q = dueling_combine(vout[0], &adv);
        (
            q,
            vout[0],
            adv,
            HeadTrace {
                value_in,
                value: vtr,
                adv: traces,
            },
        )
    }

    /// Returns `(dL/dshared, dL/drow_i)`.
    fn backward(&self, p: &[f64], shared: &[f64], rows: &[Vec<f64>], t: &HeadTrace, dq: &[f64], g: &mut [f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len();
        let total: f64 = dq.iter().sum();
        let mut d_shared = vec![0.0; self.shared];
        let mut d_rows = vec![vec![0.0; self.row]; n];

        let dv = self.value.backward(p, &t.value_in, &t.value, &[total], g);
        for (a, b) in d_shared.iter_mut().zip(&dv[..self.shared]) {
            *a += b;
        }
        for dr in d_rows.iter_mut() {
            for (a, b) in dr.iter_mut().zip(&dv[self.shared..]) {
                *a += b / n as f64;
            }
        }

        let first = &self.advantage.layers[0];
        let mut d_base = vec![0.0; first.out];
        for i in 0..n {
            let da = dq[i] - total / n as f64;
            if da == 0.0 {
                continue;
            }
            let d0 = self.advantage.backward_to_first_pre(p, &t.adv[i], &[da], g);
            first.backward_params(self.shared, &rows[i], &d0, g, true);
            first.backward_input(p, self.shared, &d0, &mut d_rows[i]);
            for (a, b) in d_base.iter_mut().zip(&d0) {
                *a += b;
            }
        }
        first.backward_params(0, shared, &d_base, g, false);
        first.backward_input(p, 0, &d_base, &mut d_shared);
        (d_shared, d_rows)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    point: Mlp,
    prop: Mlp,
    pose: Mlp,
    maps: [MapEncoder; 3],
    object_head: DuelingHead,
    place_head: DuelingHead,
    len: usize,
    init_ranges: Vec<(usize, usize, usize)>,
}

/// Network architecture; parameters are passed separately as a flat slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QNet {
    dims: DimTable,
    layout: Layout,
}

/// Which occupancy-style map an encoder reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Occupancy = 0,
    Fragility = 1,
    Avoidance = 2,
}

/// Encoded object: pooled point feature, the index of the point that won
/// each pooled channel, and the property embedding.
#[derive(Clone, Debug)]
pub struct ObjectCode {
    pub points: Vec<f64>,
    argmax: Vec<usize>,
    pub props: Vec<f64>,
    prop_trace: MlpTrace,
}

/// Map features for one step, reused by both heads.
pub struct EncodedStep<'a> {
    step: &'a StepInput,
    maps: Vec<Vec<f64>>,
    traces: Vec<MapTrace>,
    objects: Vec<ObjectCode>,
}

impl<'a> EncodedStep<'a> {
    pub fn step(&self) -> &StepInput {
        self.step
    }

    pub fn map_features(&self, i: usize) -> &[f64] {
        &self.maps[i]
    }

    pub fn object(&self, b: usize) -> &ObjectCode {
        &self.objects[b]
    }
}

/// Object-head training sample: regress `Q_obj[buffer_index]` on `target`.
#[derive(Clone, Copy)]
pub struct ObjectSample<'a> {
    pub step: &'a StepInput,
    pub buffer_index: usize,
    pub target: f64,
}

/// Placement-head training sample for candidate `action` of object
/// `buffer_index`.
#[derive(Clone, Copy)]
pub struct PlacementSample<'a> {
    pub step: &'a StepInput,
    pub buffer_index: usize,
    pub action: usize,
    pub target: f64,
}

struct ChunkGrad {
    loss: f64,
    grad: Vec<f64>,
    d_points: BTreeMap<u32, Vec<f64>>,
    d_props: BTreeMap<u32, Vec<f64>>,
}

impl QNet {
    pub fn new(dims: DimTable) -> Self {
        let mut b = LayoutBuilder::default();
        let point = Mlp::new(&mut b, &[3, dims.point_hidden, dims.point_dim], true);
        let prop = Mlp::new(&mut b, &[5, dims.prop_dim], true);
        let pose = Mlp::new(&mut b, &[4, dims.pose_dim], true);
        let maps = [MapEncoder::new(&mut b, &dims), MapEncoder::new(&mut b, &dims), MapEncoder::new(&mut b, &dims)];
        let object_head = DuelingHead::new(&mut b, dims.object_shared_dim(), dims.object_row_dim(), &dims);
        let place_head = DuelingHead::new(&mut b, dims.place_shared_dim(), dims.place_row_dim(), &dims);
        let len = b.len();
        QNet {
            dims,
            layout: Layout {
                point,
                prop,
                pose,
                maps,
                object_head,
                place_head,
                len,
                init_ranges: b.ranges().to_vec(),
            },
        }
    }

    pub fn dims(&self) -> &DimTable {
        &self.dims
    }

    pub fn param_count(&self) -> usize {
        self.layout.len
    }

    /// Seeded fan-in scaled initialization.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        LayoutBuilder::from_ranges(self.layout.init_ranges.clone()).init(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Parameter ranges used by the object head (encoders included).
    pub fn object_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut r = self.encoder_ranges();
        r.push(self.head_range(&self.layout.object_head));
        r
    }

    /// Parameter ranges used by the placement head (encoders included).
    pub fn placement_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut r = self.encoder_ranges();
        r.push(self.head_range(&self.layout.place_head));
        r
    }

    fn encoder_ranges(&self) -> Vec<std::ops::Range<usize>> {
        // encoders are laid out first, heads after
        let end = self.layout.object_head.value.layers[0].w;
        vec![0..end]
    }

    fn head_range(&self, h: &DuelingHead) -> std::ops::Range<usize> {
        h.value.layers[0].w..h.advantage.layers.last().unwrap().range().end
    }

    // ---- encoders ----

    /// Permutation-invariant point feature: per-point transform then a
    /// channel-wise max.
    pub fn encode_points(&self, p: &[f64], points: &[[f64; 3]]) -> (Vec<f64>, Vec<usize>) {
        assert!(!points.is_empty(), "empty point set");
        let d = self.dims.point_dim;
        let mut best = vec![f64::NEG_INFINITY; d];
        let mut arg = vec![0; d];
        for (i, pt) in points.iter().enumerate() {
            let x = pt.map(|v| v * POINT_SCALE);
            let out = self.layout.point.output(p, &x);
            for c in 0..d {
                if out[c] > best[c] {
                    best[c] = out[c];
                    arg[c] = i;
                }
            }
        }
        (best, arg)
    }

    pub fn encode_props(&self, p: &[f64], props: &[f64; 5]) -> Vec<f64> {
        self.layout.prop.output(p, &scaled_props(props))
    }

    pub fn encode_pose(&self, p: &[f64], o: Orientation) -> Vec<f64> {
        self.layout.pose.output(p, &o.quaternion())
    }

    pub fn encode_map(&self, p: &[f64], kind: MapKind, map: &[f64]) -> Vec<f64> {
        assert_eq!(map.len(), self.dims.width * self.dims.length, "map size does not match the network");
        self.layout.maps[kind as usize].forward(p, map).0
    }

    pub fn encode_object(&self, p: &[f64], points: &[[f64; 3]], props: &[f64; 5]) -> ObjectCode {
        let (pf, argmax) = self.encode_points(p, points);
        let (pv, prop_trace) = self.layout.prop.forward(p, &scaled_props(props));
        ObjectCode {
            points: pf,
            argmax,
            props: pv,
            prop_trace,
        }
    }

    fn backward_object(&self, p: &[f64], points: &[[f64; 3]], props: &[f64; 5], code: &ObjectCode, d_points: &[f64], d_props: &[f64], g: &mut [f64]) {
        self.layout.prop.backward(p, &scaled_props(props), &code.prop_trace, d_props, g);
        let mut per_point: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (c, &i) in code.argmax.iter().enumerate() {
            if d_points[c] != 0.0 {
                per_point.entry(i).or_insert_with(|| vec![0.0; self.dims.point_dim])[c] += d_points[c];
            }
        }
        for (i, dy) in per_point {
            let x = points[i].map(|v| v * POINT_SCALE);
            let (_, tr) = self.layout.point.forward(p, &x);
            self.layout.point.backward(p, &x, &tr, &dy, g);
        }
    }

    /// Encodes every map and buffered object of a step.
    pub fn encode_step<'a>(&self, p: &[f64], catalog: &PreparedCatalog, step: &'a StepInput) -> EncodedStep<'a> {
        let objects = step
            .objects
            .iter()
            .map(|id| {
                let o = catalog.get(*id).expect("step refers to an object missing from the catalog");
                self.encode_object(p, &o.points, &o.property_vector.0)
            })
            .collect();
        self.encode_step_with(p, step, objects)
    }

    /// Codes of every catalog object, for reuse while `p` stays fixed.
    pub fn encode_catalog(&self, p: &[f64], catalog: &PreparedCatalog) -> BTreeMap<u32, ObjectCode> {
        let ids: Vec<u32> = catalog.objects().iter().map(|o| o.id).collect();
        let codes: Vec<ObjectCode> = catalog
            .objects()
            .par_iter()
            .map(|o| self.encode_object(p, &o.points, &o.property_vector.0))
            .collect();
        ids.into_iter().zip(codes).collect()
    }

    /// Like [`encode_step`](Self::encode_step) with precomputed object codes.
    pub fn encode_step_cached<'a>(&self, p: &[f64], codes: &BTreeMap<u32, ObjectCode>, step: &'a StepInput) -> EncodedStep<'a> {
        let objects = step.objects.iter().map(|id| codes[id].clone()).collect();
        self.encode_step_with(p, step, objects)
    }

    fn encode_step_with<'a>(&self, p: &[f64], step: &'a StepInput, objects: Vec<ObjectCode>) -> EncodedStep<'a> {
        let mut maps = Vec::with_capacity(step.maps.len());
        let mut traces = Vec::with_capacity(step.maps.len());
        for (i, m) in step.maps.iter().enumerate() {
            assert_eq!(m.len(), self.dims.width * self.dims.length, "map size does not match the network");
            let enc = &self.layout.maps[i.min(2)];
            let (f, t) = enc.forward(p, m);
            maps.push(f);
            traces.push(t);
        }
        EncodedStep { step, maps, traces, objects }
    }

    fn object_inputs(&self, e: &EncodedStep<'_>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut shared = e.maps[0].clone();
        shared.extend_from_slice(&e.maps[1]);
        let rows = (0..e.step.objects.len())
            .map(|b| {
                let mut r = e.objects[b].points.clone();
                r.extend_from_slice(&e.objects[b].props);
                r.extend_from_slice(&e.maps[e.step.avoid_map[b]]);
                r
            })
            .collect();
        (shared, rows)
    }

    fn place_inputs(&self, p: &[f64], e: &EncodedStep<'_>, b: usize) -> (Vec<f64>, Vec<Vec<f64>>, BTreeMap<Orientation, (Vec<f64>, MlpTrace)>) {
        let obj = &e.objects[b];
        let mut shared = obj.points.clone();
        shared.extend_from_slice(&obj.props);
        shared.extend_from_slice(&e.maps[0]);
        shared.extend_from_slice(&e.maps[1]);
        shared.extend_from_slice(&e.maps[e.step.avoid_map[b]]);
        let mut poses = BTreeMap::new();
        for c in &e.step.candidates[b] {
            poses
                .entry(c.orientation)
                .or_insert_with(|| self.layout.pose.forward(p, &c.orientation.quaternion()));
        }
        let rows = e.step.candidates[b]
            .iter()
            .zip(&e.step.local[b])
            .map(|(c, loc)| {
                let mut r = poses[&c.orientation].0.clone();
                r.extend_from_slice(loc);
                r
            })
            .collect();
        (shared, rows, poses)
    }

    /// Q-values for choosing each buffered object.
    pub fn object_q(&self, p: &[f64], e: &EncodedStep<'_>) -> Vec<f64> {
        let (shared, rows) = self.object_inputs(e);
        self.layout.object_head.forward(p, &shared, &rows).0
    }

    /// `(Q, V, A)` of the object head.
    pub fn object_q_parts(&self, p: &[f64], e: &EncodedStep<'_>) -> (Vec<f64>, f64, Vec<f64>) {
        let (shared, rows) = self.object_inputs(e);
        let (q, v, a, _) = self.layout.object_head.forward(p, &shared, &rows);
        (q, v, a)
    }

    /// Q-values over the candidate placements of buffered object `b`.
    pub fn placement_q(&self, p: &[f64], e: &EncodedStep<'_>, b: usize) -> Vec<f64> {
        self.placement_q_parts(p, e, b).0
    }

    pub fn placement_q_parts(&self, p: &[f64], e: &EncodedStep<'_>, b: usize) -> (Vec<f64>, f64, Vec<f64>) {
        assert!(!e.step.candidates[b].is_empty(), "object has no candidate placements");
        let (shared, rows, _) = self.place_inputs(p, e, b);
        let (q, v, a, _) = self.layout.place_head.forward(p, &shared, &rows);
        (q, v, a)
    }

    // ---- training ----

    fn encode_batch_objects(&self, p: &[f64], catalog: &PreparedCatalog, steps: &[&StepInput]) -> BTreeMap<u32, ObjectCode> {
        let mut ids: Vec<u32> = steps.iter().flat_map(|s| s.objects.iter().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        let codes: Vec<ObjectCode> = ids
            .par_iter()
            .map(|id| {
                let o = catalog.get(*id).expect("unknown object id");
                self.encode_object(p, &o.points, &o.property_vector.0)
            })
            .collect();
        ids.into_iter().zip(codes).collect()
    }

    fn finish_batch(&self, p: &[f64], catalog: &PreparedCatalog, codes: &BTreeMap<u32, ObjectCode>, chunks: Vec<ChunkGrad>, n: usize) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        let mut d_points: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut d_props: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for c in chunks {
            loss += c.loss;
            for (a, b) in grad.iter_mut().zip(&c.grad) {
                *a += b;
            }
            for (id, d) in c.d_points {
                add_into(d_points.entry(id).or_insert_with(|| vec![0.0; d.len()]), &d);
            }
            for (id, d) in c.d_props {
                add_into(d_props.entry(id).or_insert_with(|| vec![0.0; d.len()]), &d);
            }
        }
        for (id, code) in codes {
            let (Some(dp), Some(dv)) = (d_points.get(id), d_props.get(id)) else {
                continue;
            };
            let o = catalog.get(*id).unwrap();
            self.backward_object(p, &o.points, &o.property_vector.0, code, dp, dv, &mut grad);
        }
        (loss / n as f64, grad)
    }

    fn backward_maps(&self, p: &[f64], e: &EncodedStep<'_>, d_maps: &[Vec<f64>], g: &mut [f64]) {
        for (i, d) in d_maps.iter().enumerate() {
            if d.iter().any(|&v| v != 0.0) {
                self.layout.maps[i.min(2)].backward(p, &e.step.maps[i], &e.traces[i], d, g);
            }
        }
    }

    /// Mean squared error of the object head over `samples` and its exact
    /// gradient.
    pub fn object_loss_and_gradients(&self, p: &[f64], catalog: &PreparedCatalog, samples: &[ObjectSample<'_>]) -> (f64, Vec<f64>) {
        assert!(!samples.is_empty(), "empty batch");
        assert!(samples.iter().all(|s| s.target.is_finite()), "non-finite target");
        let steps: Vec<&StepInput> = samples.iter().map(|s| s.step).collect();
        let codes = self.encode_batch_objects(p, catalog, &steps);
        let n = samples.len();
        let md = self.dims.map_dim;
        let (pd, vd) = (self.dims.point_dim, self.dims.prop_dim);
        let chunks: Vec<ChunkGrad> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut out = ChunkGrad::new(p.len());
                for s in chunk {
                    let objs = s.step.objects.iter().map(|id| codes[id].clone()).collect();
                    let e = self.encode_step_with(p, s.step, objs);
                    let (shared, rows) = self.object_inputs(&e);
                    let (q, _, _, tr) = self.layout.object_head.forward(p, &shared, &rows);
                    let err = q[s.buffer_index] - s.target;
                    out.loss += err * err;
                    let mut dq = vec![0.0; q.len()];
                    dq[s.buffer_index] = 2.0 * err / n as f64;
                    let (ds, drows) = self.layout.object_head.backward(p, &shared, &rows, &tr, &dq, &mut out.grad);
                    let mut d_maps = vec![vec![0.0; md]; e.step.maps.len()];
                    add_into(&mut d_maps[0], &ds[..md]);
                    add_into(&mut d_maps[1], &ds[md..]);
                    for (b, dr) in drows.iter().enumerate() {
                        let id = e.step.objects[b];
                        add_into(out.d_points.entry(id).or_insert_with(|| vec![0.0; pd]), &dr[..pd]);
                        add_into(out.d_props.entry(id).or_insert_with(|| vec![0.0; vd]), &dr[pd..pd + vd]);
                        add_into(&mut d_maps[e.step.avoid_map[b]], &dr[pd + vd..]);
                    }
                    self.backward_maps(p, &e, &d_maps, &mut out.grad);
                }
                out
            })
            .collect();
        self.finish_batch(p, catalog, &codes, chunks, n)
    }

    /// Mean squared error of the placement head over `samples` and its
    /// exact gradient.
    pub fn placement_loss_and_gradients(&self, p: &[f64], catalog: &PreparedCatalog, samples: &[PlacementSample<'_>]) -> (f64, Vec<f64>) {
        assert!(!samples.is_empty(), "empty batch");
        assert!(samples.iter().all(|s| s.target.is_finite()), "non-finite target");
        let steps: Vec<&StepInput> = samples.iter().map(|s| s.step).collect();
        let codes = self.encode_batch_objects(p, catalog, &steps);
        let n = samples.len();
        let md = self.dims.map_dim;
        let (pd, vd, od) = (self.dims.point_dim, self.dims.prop_dim, self.dims.pose_dim);
        let chunks: Vec<ChunkGrad> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut out = ChunkGrad::new(p.len());
                for s in chunk {
                    let b = s.buffer_index;
                    let id = s.step.objects[b];
                    let e = self.encode_step_with(p, s.step, s.step.objects.iter().map(|id| codes[id].clone()).collect());
                    let (shared, rows, poses) = self.place_inputs(p, &e, b);
                    let (q, _, _, tr) = self.layout.place_head.forward(p, &shared, &rows);
                    let err = q[s.action] - s.target;
                    out.loss += err * err;
                    let mut dq = vec![0.0; q.len()];
                    dq[s.action] = 2.0 * err / n as f64;
                    let (ds, drows) = self.layout.place_head.backward(p, &shared, &rows, &tr, &dq, &mut out.grad);

                    add_into(out.d_points.entry(id).or_insert_with(|| vec![0.0; pd]), &ds[..pd]);
                    add_into(out.d_props.entry(id).or_insert_with(|| vec![0.0; vd]), &ds[pd..pd + vd]);
                    let mut d_maps = vec![vec![0.0; md]; e.step.maps.len()];
                    let m0 = pd + vd;
                    add_into(&mut d_maps[0], &ds[m0..m0 + md]);
                    add_into(&mut d_maps[1], &ds[m0 + md..m0 + 2 * md]);
                    add_into(&mut d_maps[e.step.avoid_map[b]], &ds[m0 + 2 * md..]);
                    self.backward_maps(p, &e, &d_maps, &mut out.grad);

                    let mut d_pose: BTreeMap<Orientation, Vec<f64>> = BTreeMap::new();
                    for (c, dr) in e.step.candidates[b].iter().zip(&drows) {
                        add_into(d_pose.entry(c.orientation).or_insert_with(|| vec![0.0; od]), &dr[..od]);
                    }
                    for (o, d) in d_pose {
                        let (_, tr) = &poses[&o];
                        self.layout.pose.backward(p, &o.quaternion(), tr, &d, &mut out.grad);
                    }
                }
                out
            })
            .collect();
        self.finish_batch(p, catalog, &codes, chunks, n)
    }
}

impl ChunkGrad {
    fn new(n: usize) -> Self {
        ChunkGrad {
            loss: 0.0,
            grad: vec![0.0; n],
            d_points: BTreeMap::new(),
            d_props: BTreeMap::new(),
        }
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn scaled_props(props: &[f64; 5]) -> [f64; 5] {
    let mut s = *props;
    for (v, k) in s.iter_mut().zip(PROP_SCALE) {
        *v *= k;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, ObjectRecord};
    use crate::container::ContainerState;
    use crate::net::features::step_input;
    use crate::properties::{MaterialTable, ObjectProperties};
    use crate::voxel::VoxelShape;
    use std::sync::Arc;

    fn catalog() -> PreparedCatalog {
        let l = VoxelShape::from_cells("l", &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0], [0, 0, 1]]).unwrap();
        let shapes = [
            (VoxelShape::solid_box("a", 2, 2, 2).unwrap(), ObjectProperties { fragile: true, soft: true, density_level: 1, ..Default::default() }),
            (l, ObjectProperties { sharp: true, density_level: 4, ..Default::default() }),
            (VoxelShape::solid_box("c", 3, 1, 2).unwrap(), ObjectProperties { density_level: 2, ..Default::default() }),
        ];
        let records = shapes
            .into_iter()
            .enumerate()
            .map(|(i, (shape, properties))| ObjectRecord {
                id: i as u32,
                class_name: format!("o{i}"),
                tag: None,
                shape,
                properties,
            })
            .collect();
        Catalog::new(records, MaterialTable::default()).unwrap().prepare().unwrap()
    }

    fn scene(cat: &PreparedCatalog, ids: &[u32]) -> StepInput {
        let mut s = ContainerState::new(8, 8, 8);
        let a = cat.get(0).unwrap();
        s.place(a, &a.poses[0], 1, 1).unwrap();
        let c = cat.get(2).unwrap();
        s.place(c, &c.poses[0], 4, 5).unwrap();
        let buffer: Vec<_> = ids.iter().map(|&i| Arc::clone(cat.get(i).unwrap())).collect();
        step_input(&s, &buffer, cat.avoidance())
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn dueling_examples() {
        assert_eq!(dueling_combine(2.0, &[1.0, 3.0, 5.0]), vec![0.0, 2.0, 4.0]);
        assert_eq!(dueling_combine(-1.5, &[0.7; 4]), vec![-1.5; 4]);
        let a: Vec<f64> = (0..17).map(|i| (i as f64 * 1.3).sin() * 40.0).collect();
        let q = dueling_combine(3.25, &a);
        assert!((q.iter().sum::<f64>() / q.len() as f64 - 3.25).abs() < 1e-9);
    }

    #[test]
    fn point_feature_ignores_order() {
        let net = QNet::new(DimTable::compact(8, 8));
        let p = net.init(3);
        let cat = catalog();
        let pts = cat.get(1).unwrap().points.clone();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.rotate_left(17);
        let (a, _) = net.encode_points(&p, &pts);
        let (b, _) = net.encode_points(&p, &shuffled);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn property_slot_only_moves_property_feature() {
        let net = QNet::new(DimTable::compact(8, 8));
        let p = net.init(4);
        let cat = catalog();
        let o = cat.get(2).unwrap();
        let base = net.encode_object(&p, &o.points, &o.property_vector.0);
        let mut v = o.property_vector.0;
        v[4] *= 2.0;
        let doubled = net.encode_object(&p, &o.points, &v);
        assert_eq!(base.points, doubled.points);
        assert_ne!(base.props, doubled.props);
    }

    #[test]
    fn map_encoder_behaviour() {
        let net = QNet::new(DimTable::compact(8, 8));
        let p = net.init(5);
        let zero = vec![0.0; 64];
        let a = net.encode_map(&p, MapKind::Occupancy, &zero);
        assert_eq!(a, net.encode_map(&p, MapKind::Occupancy, &zero));
        let mut t1 = zero.clone();
        t1[2 + 8 * 3] = 0.9;
        let mut t2 = zero.clone();
        t2[3 + 8 * 3] = 0.9;
        assert_ne!(net.encode_map(&p, MapKind::Occupancy, &t1), net.encode_map(&p, MapKind::Occupancy, &t2));
    }

    #[test]
    fn object_head_symmetries() {
        let net = QNet::new(DimTable::compact(8, 8));
        let p = net.init(6);
        let cat = catalog();

        let one = scene(&cat, &[1]);
        let e = net.encode_step(&p, &cat, &one);
        let (q, v, _) = net.object_q_parts(&p, &e);
        assert!((q[0] - v).abs() < 1e-12);

        let fwd = scene(&cat, &[1, 2, 0]);
        let rev = scene(&cat, &[0, 2, 1]);
        let qf = net.object_q(&p, &net.encode_step(&p, &cat, &fwd));
        let qr = net.object_q(&p, &net.encode_step(&p, &cat, &rev));
        for (i, j) in [(0, 2), (1, 1), (2, 0)] {
            assert!((qf[i] - qr[j]).abs() < 1e-9);
        }

        let clones = scene(&cat, &[2, 2]);
        let qc = net.object_q(&p, &net.encode_step(&p, &cat, &clones));
        assert_eq!(qc[0], qc[1]);
    }

    #[test]
    fn placement_head_identities() {
        let net = QNet::new(DimTable::compact(8, 8));
        let p = net.init(7);
        let cat = catalog();
        let st = scene(&cat, &[1, 2]);
        let e = net.encode_step(&p, &cat, &st);
        for b in 0..st.len() {
            let (q, v, _) = net.placement_q_parts(&p, &e, b);
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            assert!((mean - v).abs() < 1e-9);
        }
        let mut dup = st.clone();
        let first = dup.candidates[0][0];
        let loc = dup.local[0][0];
        dup.candidates[0].push(first);
        dup.local[0].push(loc);
        let q = net.placement_q(&p, &net.encode_step(&p, &cat, &dup), 0);
        assert_eq!(q[0], *q.last().unwrap());
    }

    fn check_gradients(net: &QNet, p: &[f64], analytic: &[f64], loss: &dyn Fn(&[f64]) -> f64) {
        let mut worst = 0.0f64;
        let h = 1e-5;
        for i in 0..p.len() {
            let mut a = p.to_vec();
            a[i] += h;
            let mut b = p.to_vec();
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], fd));
        }
        assert!(worst < 1e-4, "max relative error {worst} over {} parameters", net.param_count());
    }

    #[test]
    fn full_network_gradients() {
        let net = QNet::new(DimTable::tiny(8, 8));
        let p = net.init(11);
        let cat = catalog();
        let s1 = scene(&cat, &[1, 2, 0]);
        let s2 = scene(&cat, &[0, 1]);

        let place = [
            PlacementSample { step: &s1, buffer_index: 0, action: 1, target: 0.7 },
            PlacementSample { step: &s2, buffer_index: 1, action: 0, target: -1.2 },
            PlacementSample { step: &s1, buffer_index: 2, action: 0, target: 2.0 },
        ];
        let (_, g) = net.placement_loss_and_gradients(&p, &cat, &place);
        check_gradients(&net, &p, &g, &|q| net.placement_loss_and_gradients(q, &cat, &place).0);
        for r in net.object_ranges() {
            if r.start > 0 {
                assert!(g[r].iter().all(|&v| v == 0.0), "object head untouched by placement loss");
            }
        }

        let obj = [
            ObjectSample { step: &s1, buffer_index: 1, target: 0.4 },
            ObjectSample { step: &s2, buffer_index: 0, target: -0.3 },
        ];
        let (_, g) = net.object_loss_and_gradients(&p, &cat, &obj);
        check_gradients(&net, &p, &g, &|q| net.object_loss_and_gradients(q, &cat, &obj).0);
    }

    #[test]
    fn zero_loss_at_prediction() {
        let net = QNet::new(DimTable::tiny(8, 8));
        let p = net.init(12);
        let cat = catalog();
        let s = scene(&cat, &[1]);
        let q = net.placement_q(&p, &net.encode_step(&p, &cat, &s), 0);
        let (loss, g) = net.placement_loss_and_gradients(&p, &cat, &[PlacementSample { step: &s, buffer_index: 0, action: 0, target: q[0] }]);
        assert!(loss < 1e-24);
        assert!(g.iter().all(|&v| v.abs() < 1e-12));
    }
}
