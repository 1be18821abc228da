//! Binary model container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "HYRECMDL" | version u8 | section count u32
//! per section: name length u16 | name utf8 | payload length u64 | payload
//! ```
//!
//! Sections: `meta`, `graph` (optional), `node_table`, `gnn.<l>`,
//! `text_table`, `head`, `lora.<param>` and, for quantized models,
//! `int8.gnn.<l>`, `int8.head.hidden`, `int8.head.out`. Matrices are
//! `rows u64 | cols u64 | rows*cols f64`. Unknown sections are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use hybridrec::fusion::PredictionHead;
use hybridrec::model::{gnn_param_name, StructuralParams, HEAD_HIDDEN};
use hybridrec::serving::{HeadWeights, LayerWeights};
use hybridrec::{
    Activation, InteractionGraph, LoraAdapter, Matrix, ModelDims, ModelParams, QuantizedMatrix, ServingModel,
    TextTable, TrainableMask, Variant,
};

use crate::error::{BenchError, Result};

pub const MAGIC: &[u8; 8] = b"HYRECMDL";
pub const FORMAT_VERSION: u8 = 1;

/// Shape of the graph the model was trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphMeta {
    pub num_users: u64,
    pub num_items: u64,
    pub num_edges: u64,
}

impl GraphMeta {
    pub fn of(g: &InteractionGraph) -> Self {
        Self { num_users: g.num_users() as u64, num_items: g.num_items() as u64, num_edges: g.num_edges() as u64 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub params: ModelParams,
    pub graph: Option<GraphMeta>,
    /// Whether INT8 sections were stored.
    pub quantized: bool,
}

impl ModelFile {
    /// The serving snapshot, INT8 when the file holds quantized sections.
    pub fn serving(&self) -> hybridrec::Result<ServingModel> {
        if self.quantized {
            ServingModel::quantized(&self.params)
        } else {
            ServingModel::from_params(&self.params)
        }
    }
}

fn bad(path: &Path, msg: impl Into<String>) -> BenchError {
    BenchError::Data { path: path.display().to_string(), line: 0, msg: msg.into() }
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    out.write_u64::<LE>(m.rows() as u64).unwrap();
    out.write_u64::<LE>(m.cols() as u64).unwrap();
    for &v in m.as_slice() {
        out.write_f64::<LE>(v).unwrap();
    }
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.write_u64::<LE>(xs.len() as u64).unwrap();
    for &v in xs {
        out.write_f64::<LE>(v).unwrap();
    }
}

fn put_quantized(out: &mut Vec<u8>, q: &QuantizedMatrix) {
    out.write_u64::<LE>(q.rows() as u64).unwrap();
    out.write_u64::<LE>(q.cols() as u64).unwrap();
    for &c in q.codes() {
        out.write_i8(c).unwrap();
    }
    for &s in q.scales() {
        out.write_f64::<LE>(s).unwrap();
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::GnnOnly => 0,
        Variant::TextOnly => 1,
        Variant::Hybrid => 2,
    }
}

fn mask_bits(m: TrainableMask) -> u8 {
    [m.node_table, m.gnn_weights, m.text_table, m.head_hidden, m.head_out, m.lora]
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | ((b as u8) << i))
}

/// Serializes `params`. With `quantize`, INT8 copies of the effective GNN
/// weights and head are stored alongside the f64 weights.
pub fn encode_model(params: &ModelParams, graph: Option<&InteractionGraph>, quantize: bool) -> Result<Vec<u8>> {
    let mut sections: Vec<(String, Vec<u8>)> = Vec::new();

    let mut meta = Vec::new();
    let d = params.dims;
    meta.write_u8(variant_code(params.variant)).unwrap();
    for v in [d.d_g, d.d_s, d.d_h, d.layers] {
        meta.write_u32::<LE>(v as u32).unwrap();
    }
    meta.write_u64::<LE>(d.num_buckets).unwrap();
    meta.write_u64::<LE>(params.num_users as u64).unwrap();
    meta.write_u64::<LE>(params.num_items as u64).unwrap();
    meta.write_u8(mask_bits(params.trainable)).unwrap();
    sections.push(("meta".into(), meta));

    if let Some(g) = graph {
        let m = GraphMeta::of(g);
        let mut b = Vec::new();
        for v in [m.num_users, m.num_items, m.num_edges] {
            b.write_u64::<LE>(v).unwrap();
        }
        sections.push(("graph".into(), b));
    }
    if let Some(s) = &params.structural {
        let mut b = Vec::new();
        put_matrix(&mut b, &s.node_table);
        sections.push(("node_table".into(), b));
        for (l, w) in s.gnn_weights.iter().enumerate() {
            let mut b = Vec::new();
            put_matrix(&mut b, w);
            sections.push((gnn_param_name(l), b));
        }
    }
    if let Some(t) = &params.text_table {
        let mut b = Vec::new();
        b.write_u64::<LE>(t.seed()).unwrap();
        b.write_u64::<LE>(t.num_buckets()).unwrap();
        b.write_u64::<LE>(t.materialized_buckets().len() as u64).unwrap();
        for &k in t.materialized_buckets() {
            b.write_u64::<LE>(k).unwrap();
        }
        put_matrix(&mut b, t.rows());
        sections.push(("text_table".into(), b));
    }
    let h = &params.head;
    let mut b = Vec::new();
    put_matrix(&mut b, &h.hidden);
    put_f64s(&mut b, &h.hidden_bias);
    put_matrix(&mut b, &h.out);
    b.write_f64::<LE>(h.out_bias).unwrap();
    b.write_u8(activation_code(h.hidden_activation)).unwrap();
    sections.push(("head".into(), b));

    for (name, a) in &params.lora {
        let mut b = Vec::new();
        b.write_u32::<LE>(a.rank as u32).unwrap();
        b.write_f64::<LE>(a.alpha).unwrap();
        put_matrix(&mut b, &a.a);
        put_matrix(&mut b, &a.b);
        sections.push((format!("lora.{name}"), b));
    }

    if quantize {
        let serving = ServingModel::quantized(params)?;
        for (l, w) in serving.layers().iter().enumerate() {
            if let LayerWeights::Quantized(q) = w {
                let mut b = Vec::new();
                put_quantized(&mut b, q);
                sections.push((format!("int8.{}", gnn_param_name(l)), b));
            }
        }
        if let HeadWeights::Quantized(q) = serving.head() {
            for (name, m) in [("int8.head.hidden", &q.hidden), ("int8.head.out", &q.out)] {
                let mut b = Vec::new();
                put_quantized(&mut b, m);
                sections.push((name.into(), b));
            }
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u8(FORMAT_VERSION).unwrap();
    out.write_u32::<LE>(sections.len() as u32).unwrap();
    for (name, payload) in sections {
        out.write_u16::<LE>(name.len() as u16).unwrap();
        out.extend_from_slice(name.as_bytes());
        out.write_u64::<LE>(payload.len() as u64).unwrap();
        out.extend_from_slice(&payload);
    }
    Ok(out)
}

pub fn save_model(path: &Path, params: &ModelParams, graph: Option<&InteractionGraph>, quantize: bool) -> Result<()> {
    let bytes = encode_model(params, graph, quantize)?;
    let mut f = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| BenchError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode_model(&bytes, path)
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    path: &'a Path,
    what: String,
}

impl Reader<'_> {
    fn err(&self, e: impl std::fmt::Display) -> BenchError {
        bad(self.path, format!("section {}: {e}", self.what))
    }

    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|e| self.err(e))
    }

    fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|e| self.err(e))
    }

    fn u64(&mut self) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|e| self.err(e))
    }

    fn f64(&mut self) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|e| self.err(e))
    }

    /// A length read from the file, checked against the bytes left.
    fn len(&mut self, elem_bytes: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        let left = self.cur.get_ref().len() - self.cur.position() as usize;
        if n.checked_mul(elem_bytes).map_or(true, |b| b > left) {
            return Err(self.err(format!("length {n} exceeds the payload")));
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len(0)?;
        let cols = self.len(0)?;
        let n = rows.checked_mul(cols).ok_or_else(|| self.err("matrix too large"))?;
        let left = self.cur.get_ref().len() - self.cur.position() as usize;
        if n.checked_mul(8).map_or(true, |b| b > left) {
            return Err(self.err(format!("{rows}x{cols} matrix exceeds the payload")));
        }
        let data = self.f64s(n)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| self.err(e))
    }

    fn quantized(&mut self) -> Result<QuantizedMatrix> {
        let rows = self.len(0)?;
        let cols = self.len(0)?;
        let n = rows.checked_mul(cols).ok_or_else(|| self.err("matrix too large"))?;
        let mut codes = vec![0u8; n];
        self.cur.read_exact(&mut codes).map_err(|e| self.err(e))?;
        let scales = self.f64s(rows)?;
        QuantizedMatrix::from_parts(rows, cols, codes.into_iter().map(|c| c as i8).collect(), scales)
            .map_err(|e| self.err(e))
    }

    fn finish(&self) -> Result<()> {
        if self.cur.position() as usize != self.cur.get_ref().len() {
            return Err(self.err("trailing bytes"));
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<ModelFile> {
    if bytes.len() < MAGIC.len() + 5 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad(path, "not a model file (bad magic)"));
    }
    let version = bytes[MAGIC.len()];
    if version != FORMAT_VERSION {
        return Err(bad(path, format!("unsupported format version {version}")));
    }
    let mut top = Reader { cur: Cursor::new(&bytes[MAGIC.len() + 1..]), path, what: "header".into() };
    let count = top.u32()?;
    let mut sections: BTreeMap<String, &[u8]> = BTreeMap::new();
    for _ in 0..count {
        let n = top.cur.read_u16::<LE>().map_err(|e| top.err(e))? as usize;
        let mut name = vec![0u8; n];
        top.cur.read_exact(&mut name).map_err(|e| top.err(e))?;
        let name = String::from_utf8(name).map_err(|e| top.err(e))?;
        let len = top.len(1)?;
        let start = MAGIC.len() + 1 + top.cur.position() as usize;
        top.cur.set_position(top.cur.position() + len as u64);
        if sections.insert(name.clone(), &bytes[start..start + len]).is_some() {
            return Err(bad(path, format!("duplicate section {name}")));
        }
    }
    top.finish()?;

    let mut take = |name: &str| sections.remove(name);
    let reader = |name: &str, b| Reader { cur: Cursor::new(b), path, what: name.to_owned() };

    let meta = take("meta").ok_or_else(|| bad(path, "missing section meta"))?;
    let mut r = reader("meta", meta);
    let variant = match r.u8()? {
        0 => Variant::GnnOnly,
        1 => Variant::TextOnly,
        2 => Variant::Hybrid,
        v => return Err(r.err(format!("unknown variant {v}"))),
    };
    let (d_g, d_s, d_h, layers) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let dims = ModelDims { d_g, d_s, d_h, layers, num_buckets: r.u64()? };
    let num_users = r.u64()? as usize;
    let num_items = r.u64()? as usize;
    let bits = r.u8()?;
    r.finish()?;
    let flag = |i: u8| bits & (1 << i) != 0;
    let trainable = TrainableMask {
        node_table: flag(0),
        gnn_weights: flag(1),
        text_table: flag(2),
        head_hidden: flag(3),
        head_out: flag(4),
        lora: flag(5),
    };

    let graph = match take("graph") {
        Some(b) => {
            let mut r = reader("graph", b);
            let m = GraphMeta { num_users: r.u64()?, num_items: r.u64()?, num_edges: r.u64()? };
            r.finish()?;
            Some(m)
        }
        None => None,
    };

    let structural = match take("node_table") {
        Some(b) => {
            let mut r = reader("node_table", b);
            let node_table = r.matrix()?;
            r.finish()?;
            let mut gnn_weights = Vec::with_capacity(layers);
            for l in 0..layers {
                let name = gnn_param_name(l);
                let b = take(&name).ok_or_else(|| bad(path, format!("missing section {name}")))?;
                let mut r = reader(&name, b);
                gnn_weights.push(r.matrix()?);
                r.finish()?;
            }
            Some(StructuralParams { node_table, gnn_weights })
        }
        None => None,
    };

    let text_table = match take("text_table") {
        Some(b) => {
            let mut r = reader("text_table", b);
            let seed = r.u64()?;
            let num_buckets = r.u64()?;
            let n = r.len(8)?;
            let buckets = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let rows = r.matrix()?;
            r.finish()?;
            Some(TextTable::from_parts(seed, num_buckets, d_s, buckets, rows).map_err(|e| bad(path, e.to_string()))?)
        }
        None => None,
    };

    let b = take("head").ok_or_else(|| bad(path, "missing section head"))?;
    let mut r = reader("head", b);
    let hidden = r.matrix()?;
    let n = r.len(8)?;
    let hidden_bias = r.f64s(n)?;
    let out = r.matrix()?;
    let out_bias = r.f64()?;
    let hidden_activation = match r.u8()? {
        0 => Activation::Identity,
        1 => Activation::Relu,
        v => return Err(r.err(format!("unknown activation {v}"))),
    };
    r.finish()?;
    let head = PredictionHead { hidden, hidden_bias, out, out_bias, hidden_activation };

    let mut lora = BTreeMap::new();
    let lora_names: Vec<String> = sections.keys().filter(|k| k.starts_with("lora.")).cloned().collect();
    for key in lora_names {
        let b = sections.remove(&key).expect("listed");
        let mut r = reader(&key, b);
        let rank = r.u32()? as usize;
        let alpha = r.f64()?;
        let a = r.matrix()?;
        let bm = r.matrix()?;
        r.finish()?;
        let adapter = LoraAdapter { a, b: bm, rank, alpha };
        adapter.validate().map_err(|e| bad(path, format!("section {key}: {e}")))?;
        lora.insert(key["lora.".len()..].to_owned(), adapter);
    }

    let mut int8 = BTreeMap::new();
    let int8_names: Vec<String> = sections.keys().filter(|k| k.starts_with("int8.")).cloned().collect();
    for key in int8_names {
        let b = sections.remove(&key).expect("listed");
        let mut r = reader(&key, b);
        int8.insert(key, r.quantized()?);
        r.finish()?;
    }
    if let Some(name) = sections.keys().next() {
        return Err(bad(path, format!("unknown section {name}")));
    }

    let params = ModelParams { variant, dims, num_users, num_items, structural, text_table, head, lora, trainable };
    check_shapes(&params).map_err(|msg| bad(path, msg))?;
    let quantized = !int8.is_empty();
    if quantized {
        let expected = decode_expected_int8(&params).map_err(|e| bad(path, e.to_string()))?;
        if expected != int8 {
            return Err(bad(path, "INT8 sections do not match the stored weights"));
        }
    }
    Ok(ModelFile { params, graph, quantized })
}

fn check_shapes(p: &ModelParams) -> std::result::Result<(), String> {
    let d = p.dims;
    if p.variant.uses_structure() != p.structural.is_some() || p.variant.uses_text() != p.text_table.is_some() {
        return Err(format!("sections do not match variant {}", p.variant.as_str()));
    }
    let shape = |name: &str, m: &Matrix, rows: usize, cols: usize| {
        if m.shape() == (rows, cols) {
            Ok(())
        } else {
            Err(format!("{name} is {:?}, expected ({rows}, {cols})", m.shape()))
        }
    };
    if let Some(s) = &p.structural {
        shape("node_table", &s.node_table, p.num_users + p.num_items, d.d_g)?;
        for (l, w) in s.gnn_weights.iter().enumerate() {
            shape(&gnn_param_name(l), w, d.d_g, d.d_g)?;
        }
    }
    let h = &p.head;
    shape("head.hidden", &h.hidden, d.d_h, d.fused_dim())?;
    shape("head.out", &h.out, 1, d.d_h)?;
    if h.hidden_bias.len() != d.d_h {
        return Err(format!("head.hidden_bias has {} entries, expected {}", h.hidden_bias.len(), d.d_h));
    }
    for (name, a) in &p.lora {
        let target = match (name.as_str(), &p.structural) {
            (HEAD_HIDDEN, _) => &h.hidden,
            (_, Some(s)) => match (0..s.gnn_weights.len()).find(|&l| gnn_param_name(l) == *name) {
                Some(l) => &s.gnn_weights[l],
                None => return Err(format!("adapter for unknown parameter {name}")),
            },
            (_, None) => return Err(format!("adapter {name} without a structural encoder")),
        };
        shape(&format!("lora.{name}.a"), &a.a, a.rank, target.cols())?;
        shape(&format!("lora.{name}.b"), &a.b, target.rows(), a.rank)?;
    }
    Ok(())
}

fn decode_expected_int8(params: &ModelParams) -> hybridrec::Result<BTreeMap<String, QuantizedMatrix>> {
    let serving = ServingModel::quantized(params)?;
    let mut out = BTreeMap::new();
    for (l, w) in serving.layers().iter().enumerate() {
        if let LayerWeights::Quantized(q) = w {
            out.insert(format!("int8.{}", gnn_param_name(l)), q.clone());
        }
    }
    if let HeadWeights::Quantized(q) = serving.head() {
        out.insert("int8.head.hidden".into(), q.hidden.clone());
        out.insert("int8.head.out".into(), q.out.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hybridrec::{build_graph, Interaction, NodeTexts};

    fn trained_like() -> (ModelParams, InteractionGraph) {
        let xs: Vec<Interaction> =
            [(0, 0), (0, 1), (1, 1), (2, 2), (2, 0)].iter().map(|&(u, i)| Interaction::new(u, i, 1.0, 0)).collect();
        let (g, ids) = build_graph(&xs).unwrap();
        let dims = ModelDims { d_g: 4, d_s: 3, d_h: 5, layers: 2, num_buckets: 64 };
        let mut m = ModelParams::new(Variant::Hybrid, dims, 3, 3, 11).unwrap();
        let mut corpus = hybridrec::Corpus::default();
        corpus.item_docs.insert(0, "red wool".into());
        corpus.item_docs.insert(2, "blue denim jacket".into());
        m.prepare_docs(&NodeTexts::from_corpus(&corpus, &ids).hashed(64));
        m.head.out_bias = 0.25;
        m.enable_lora(2, 4.0, 3).unwrap();
        for a in m.lora.values_mut() {
            a.b = a.b.map(|_| 0.01);
        }
        (m, g)
    }

    #[test]
    fn round_trip_plain_and_quantized() {
        let (m, g) = trained_like();
        for quantize in [false, true] {
            let bytes = encode_model(&m, Some(&g), quantize).unwrap();
            let back = decode_model(&bytes, Path::new("mem")).unwrap();
            assert_eq!(back.params, m);
            assert_eq!(back.graph, Some(GraphMeta::of(&g)));
            assert_eq!(back.quantized, quantize);
            assert_eq!(back.serving().unwrap().version(), if quantize {
                ServingModel::quantized(&m).unwrap().version()
            } else {
                ServingModel::from_params(&m).unwrap().version()
            });
        }
    }

    #[test]
    fn header_is_checked() {
        let (m, _) = trained_like();
        let bytes = encode_model(&m, None, false).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes[8], FORMAT_VERSION);
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_model(&wrong, Path::new("mem")).is_err());
        let mut wrong = bytes.clone();
        wrong[8] = 99;
        assert!(decode_model(&wrong, Path::new("mem")).unwrap_err().to_string().contains("version"));
        assert!(decode_model(&bytes[..bytes.len() - 3], Path::new("mem")).is_err());
    }

    #[test]
    fn tampered_int8_section_is_rejected() {
        let (m, _) = trained_like();
        let mut bytes = encode_model(&m, None, true).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x40;
        assert!(decode_model(&bytes, Path::new("mem")).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let (m, g) = trained_like();
        save_model(&path, &m, Some(&g), true).unwrap();
        assert_eq!(load_model(&path).unwrap().params, m);
        assert_eq!(load_model(&dir.path().join("none.bin")).unwrap_err().exit_code(), 2);
    }
}
