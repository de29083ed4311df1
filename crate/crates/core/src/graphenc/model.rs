use std::rc::Rc;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::rng::{self, Rng};
use crate::numerics::softplus;
use crate::numerics::{glorot_uniform, Activation, ParamId, ParamSet, Tape, Tensor, Var};

/// How a (node, graph) pair is fused before the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fusion {
    /// Elementwise product, then the two-layer network.
    Product,
    /// `nodeᵀ W graph + b`.
    Bilinear,
}

/// What the discriminator compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphMode {
    /// Node-level vectors of the positive or negative graph against the
    /// positive graph-level vector.
    NodeGraph,
    /// Graph-level vectors of the positive against the negative graph.
    GraphOnly,
}

impl GraphMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphMode::NodeGraph => "node_graph",
            GraphMode::GraphOnly => "graph_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "node_graph" => Some(GraphMode::NodeGraph),
            "graph_only" => Some(GraphMode::GraphOnly),
            _ => None,
        }
    }
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Product => "product",
            Fusion::Bilinear => "bilinear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "product" => Some(Fusion::Product),
            "bilinear" => Some(Fusion::Bilinear),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphShape {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub disc_hidden: usize,
    pub fusion: Fusion,
    pub mode: GraphMode,
}

impl GraphShape {
    pub fn standard(input: usize) -> Self {
        GraphShape {
            input,
            hidden1: 128,
            hidden2: 64,
            disc_hidden: 32,
            fusion: Fusion::Product,
            mode: GraphMode::NodeGraph,
        }
    }

    pub fn repr_dim(&self) -> usize {
        self.hidden1 + self.hidden2
    }
}

#[derive(Clone, Copy, Debug)]
enum DiscIds {
    Mlp {
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
    Bilinear {
        w: ParamId,
        b: ParamId,
    },
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    disc: DiscIds,
}

/// Two-layer GCN encoder together with its discriminator.
#[derive(Clone, Debug)]
pub struct GraphModel {
    pub shape: GraphShape,
    pub params: ParamSet,
    ids: Ids,
}

impl PartialEq for GraphModel {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.params == other.params
    }
}

fn matrix(r: Option<&mut Rng>, rows: usize, cols: usize) -> Result<Tensor> {
    match r {
        Some(r) => glorot_uniform(&[rows, cols], r),
        None => Ok(Tensor::zeros(&[rows, cols])),
    }
}

impl GraphModel {
    pub fn init(shape: GraphShape, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, "graph-init");
        Self::build(shape, Some(&mut r))
    }

    pub fn zeros(shape: GraphShape) -> Result<Self> {
        Self::build(shape, None)
    }

    fn build(shape: GraphShape, mut r: Option<&mut Rng>) -> Result<Self> {
        let s = shape;
        if [s.input, s.hidden1, s.hidden2, s.disc_hidden].contains(&0) {
            return Err(Error::contract(format!("zero-sized layer in {s:?}")));
        }
        let d = s.repr_dim();
        let mut ps = ParamSet::new();
        let w1 = ps.push("gcn1.w", matrix(r.as_deref_mut(), s.input, s.hidden1)?);
        let b1 = ps.push("gcn1.b", Tensor::zeros(&[1, s.hidden1]));
        let w2 = ps.push("gcn2.w", matrix(r.as_deref_mut(), s.hidden1, s.hidden2)?);
        let b2 = ps.push("gcn2.b", Tensor::zeros(&[1, s.hidden2]));
        // Graph-only mode scores single vectors, so it always uses the MLP.
        let disc = match (s.fusion, s.mode) {
            (Fusion::Bilinear, GraphMode::NodeGraph) => DiscIds::Bilinear {
                w: ps.push("disc.bilinear.w", matrix(r.as_deref_mut(), d, d)?),
                b: ps.push("disc.bilinear.b", Tensor::zeros(&[1, 1])),
            },
            _ => DiscIds::Mlp {
                w1: ps.push("disc1.w", matrix(r.as_deref_mut(), d, s.disc_hidden)?),
                b1: ps.push("disc1.b", Tensor::zeros(&[1, s.disc_hidden])),
                w2: ps.push("disc2.w", matrix(r.as_deref_mut(), s.disc_hidden, 1)?),
                b2: ps.push("disc2.b", Tensor::zeros(&[1, 1])),
            },
        };
        Ok(GraphModel {
            shape,
            params: ps,
            ids: Ids { w1, b1, w2, b2, disc },
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let s = self.shape;
        let meta = [
            ("kind", "graph".to_string()),
            ("input", s.input.to_string()),
            ("hidden1", s.hidden1.to_string()),
            ("hidden2", s.hidden2.to_string()),
            ("disc_hidden", s.disc_hidden.to_string()),
            ("fusion", s.fusion.as_str().to_string()),
            ("mode", s.mode.as_str().to_string()),
        ];
        Checkpoint {
            meta: meta.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.require("kind")? != "graph" {
            return Err(Error::Validation(format!(
                "checkpoint kind `{}` is not `graph`",
                c.require("kind")?
            )));
        }
        let fusion = Fusion::parse(c.require("fusion")?)
            .ok_or_else(|| Error::Validation("unknown fusion in checkpoint".into()))?;
        let mode = GraphMode::parse(c.require("mode")?)
            .ok_or_else(|| Error::Validation("unknown mode in checkpoint".into()))?;
        let shape = GraphShape {
            input: c.require_usize("input")?,
            hidden1: c.require_usize("hidden1")?,
            hidden2: c.require_usize("hidden2")?,
            disc_hidden: c.require_usize("disc_hidden")?,
            fusion,
            mode,
        };
        let mut m = GraphModel::zeros(shape)?;
        m.params.load_from(&c.params)?;
        Ok(m)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGraph {
        let vars = self
            .params
            .ids()
            .map(|id| {
                if trainable {
                    tape.param(id, self.params.get(id))
                } else {
                    tape.constant(self.params.get(id).clone())
                }
            })
            .collect();
        BoundGraph {
            vars,
            ids: self.ids,
            shape: self.shape,
        }
    }

    /// Node representations `[N, h1 + h2]` and graph representation of one
    /// graph given its normalised adjacency.
    pub fn encode(&self, norm_adj: &Tensor, features: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let n = norm_adj.rows();
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let x = tape.constant(features.clone());
        let (nodes, graph) = b.encode(&mut tape, Rc::new(vec![norm_adj.clone()]), x, n)?;
        Ok((tape.value(nodes).clone(), tape.value(graph).data().to_vec()))
    }

    /// Raw discriminator logit for a (node, graph) pair.
    pub fn score(&self, node: &[f64], graph: &[f64]) -> Result<f64> {
        let d = self.shape.repr_dim();
        if node.len() != d || graph.len() != d {
            return Err(Error::contract(format!(
                "discriminator inputs have lengths {} and {}, expected {d}",
                node.len(),
                graph.len()
            )));
        }
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let nv = tape.constant(Tensor::row(node.to_vec()));
        let gv = tape.constant(Tensor::row(graph.to_vec()));
        let s = b.score_pairs(&mut tape, nv, gv)?;
        Ok(tape.value(s).data()[0])
    }
}

pub struct BoundGraph {
    vars: Vec<Var>,
    ids: Ids,
    shape: GraphShape,
}

impl BoundGraph {
    fn v(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn layer(&self, tape: &mut Tape, adj: Rc<Vec<Tensor>>, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let ax = tape.block_left_mul(adj, x)?;
        let z = tape.matmul(ax, self.v(w))?;
        let z = tape.add_row(z, self.v(b))?;
        Ok(tape.act(z, Activation::leaky()))
    }

    /// Stacked features `[B·N, F]` → (node reprs `[B·N, d]`, graph reprs
    /// `[B, d]`). `adj` holds one normalised adjacency shared by all graphs
    /// or one per graph.
    pub fn encode(&self, tape: &mut Tape, adj: Rc<Vec<Tensor>>, x: Var, n: usize) -> Result<(Var, Var)> {
        let f = tape.value(x).cols();
        if f != self.shape.input {
            return Err(Error::contract(format!(
                "node features have dimension {f}, encoder expects {}",
                self.shape.input
            )));
        }
        let h1 = self.layer(tape, adj.clone(), x, self.ids.w1, self.ids.b1)?;
        let h2 = self.layer(tape, adj, h1, self.ids.w2, self.ids.b2)?;
        let nodes = tape.concat_cols(&[h1, h2])?;
        let graph = tape.block_mean_rows(nodes, n)?;
        Ok((nodes, graph))
    }

    /// Logits `[R, 1]` for row-aligned pairs of node and graph vectors.
    pub fn score_pairs(&self, tape: &mut Tape, nodes: Var, graphs: Var) -> Result<Var> {
        match self.ids.disc {
            DiscIds::Mlp { .. } => {
                let fused = tape.mul(nodes, graphs)?;
                self.mlp(tape, fused)
            }
            DiscIds::Bilinear { w, b } => {
                let wg = tape.matmul(graphs, self.v(w))?;
                let prod = tape.mul(nodes, wg)?;
                let d = tape.value(prod).cols();
                let ones = tape.constant(Tensor::full(&[d, 1], 1.0));
                let s = tape.matmul(prod, ones)?;
                tape.add_row(s, self.v(b))
            }
        }
    }

    /// Logits `[R, 1]` for single vectors (graph-only mode).
    pub fn score_vectors(&self, tape: &mut Tape, v: Var) -> Result<Var> {
        self.mlp(tape, v)
    }

    fn mlp(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let DiscIds::Mlp { w1, b1, w2, b2 } = self.ids.disc else {
            return Err(Error::contract("bilinear discriminator cannot score single vectors"));
        };
        let z = tape.matmul(x, self.v(w1))?;
        let z = tape.add_row(z, self.v(b1))?;
        let z = tape.act(z, Activation::leaky());
        let z = tape.matmul(z, self.v(w2))?;
        tape.add_row(z, self.v(b2))
    }

    /// Scores for one batch: positives and negatives, each `[R, 1]`.
    pub fn batch_scores(
        &self,
        tape: &mut Tape,
        pos_adj: Rc<Vec<Tensor>>,
        neg_adj: Rc<Vec<Tensor>>,
        x: Var,
        n: usize,
    ) -> Result<(Var, Var)> {
        let (pos_nodes, pos_graph) = self.encode(tape, pos_adj, x, n)?;
        let (neg_nodes, neg_graph) = self.encode(tape, neg_adj, x, n)?;
        match self.shape.mode {
            GraphMode::NodeGraph => {
                let g = tape.repeat_rows(pos_graph, n)?;
                let pos = self.score_pairs(tape, pos_nodes, g)?;
                let neg = self.score_pairs(tape, neg_nodes, g)?;
                Ok((pos, neg))
            }
            GraphMode::GraphOnly => {
                let pos = self.score_vectors(tape, pos_graph)?;
                let neg = self.score_vectors(tape, neg_graph)?;
                Ok((pos, neg))
            }
        }
    }

    /// `-Î` as a tape node, for minimisation.
    pub fn neg_mi(&self, tape: &mut Tape, pos: Var, neg: Var) -> Result<Var> {
        let count = tape.value(pos).len();
        if count == 0 || tape.value(neg).len() != count {
            return Err(Error::contract("need one negative score per positive score"));
        }
        let np = tape.scale(pos, -1.0);
        let sp = tape.act(np, Activation::Softplus);
        let sn = tape.act(neg, Activation::Softplus);
        let a = tape.sum(sp);
        let b = tape.sum(sn);
        let total = tape.add(a, b)?;
        Ok(tape.scale(total, 1.0 / (2.0 * count as f64)))
    }
}

/// Jensen-Shannon mutual-information estimate from paired scores:
/// `(1/2M)[Σ −softplus(−pos) − Σ softplus(neg)]`.
pub fn js_mi_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::contract("mutual-information estimate of empty score lists"));
    }
    if pos.len() != neg.len() {
        return Err(Error::contract(format!(
            "need one negative per positive, got {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let a: f64 = pos.iter().map(|&s| -softplus(-s)).sum();
    let b: f64 = neg.iter().map(|&s| softplus(s)).sum();
    Ok((a - b) / (2.0 * pos.len() as f64))
}
