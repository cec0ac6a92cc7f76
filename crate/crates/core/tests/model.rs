use std::path::Path;

use proptest::prelude::*;
use serde_json::json;

use dynamap::model::{
    available_algorithms, load_model, parse_model, rewrite_avgpool, serialize_model, LayerKind, LayerMeta,
};
use dynamap::Error;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

#[test]
fn googlenet_fixture_counts() {
    let g = load_model(&fixture("googlenet.json")).unwrap();
    assert_eq!(g.conv_indices().len(), 58);
    assert_eq!(g.conv_depth(), 22);
    // auxiliary heads are gone after pruning
    assert!(g.layers.iter().all(|l| !l.id.starts_with("aux")));
    let shapes = g.shapes().unwrap();
    assert_eq!((shapes[g.sink].c, shapes[g.sink].h1, shapes[g.sink].h2), (1000, 1, 1));
}

#[test]
fn inception_v4_fixture_counts() {
    let g = load_model(&fixture("inception_v4.json")).unwrap();
    assert_eq!(g.conv_indices().len(), 150);
    let shapes = g.shapes().unwrap();
    assert_eq!(shapes[g.sink].c, 1000);
    let pre_pool = g.index_of("final_pool").unwrap();
    let input = g.preds(pre_pool).next().unwrap();
    assert_eq!((shapes[input].c, shapes[input].h1), (1536, 8));
}

#[test]
fn avgpool_rewrite_keeps_shapes() {
    let g = load_model(&fixture("inception_v4.json")).unwrap();
    let r = rewrite_avgpool(&g);
    assert_eq!(r.len(), g.len());
    assert!(r.layers.iter().all(|l| !matches!(l.kind, LayerKind::AvgPool(_))));
    assert_eq!(r.shapes().unwrap(), g.shapes().unwrap());
}

#[test]
fn missing_model_names_path() {
    let err = load_model(Path::new("/no/such/model.json")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/no/such/model.json"));
}

#[test]
fn unknown_field_is_rejected() {
    let doc = json!({
        "name": "x",
        "layers": [{"id": "in", "kind": "input", "c_out": 1, "h": 4, "colour": "red"}, {"id": "out", "kind": "output"}],
        "edges": [["in", "out"]],
        "input": "in",
        "output": "out"
    });
    assert!(matches!(parse_model(&doc.to_string()), Err(Error::Malformed(_))));
}

#[test]
fn duplicate_id_is_rejected() {
    let doc = json!({
        "name": "x",
        "layers": [{"id": "in", "kind": "input", "c_out": 1, "h": 4}, {"id": "in", "kind": "output"}],
        "edges": [],
        "input": "in",
        "output": "in"
    });
    assert!(matches!(parse_model(&doc.to_string()), Err(Error::DuplicateId(_))));
}

/// A chain of same-padded convolutions with an optional two-way branch
/// joined by a concat.
fn model_doc(chans: &[usize], kernels: &[usize], branch: bool, h: usize) -> serde_json::Value {
    let mut layers = vec![json!({"id": "in", "kind": "input", "c_out": chans[0], "h": h})];
    let mut edges = Vec::new();
    let mut prev = "in".to_string();
    let mut c = chans[0];
    for (i, (&co, &k)) in chans[1..].iter().zip(kernels).enumerate() {
        let id = format!("c{i}");
        layers
            .push(json!({"id": id, "kind": "conv", "c_in": c, "c_out": co, "h": h, "k": k, "stride": 1, "pad": k / 2}));
        edges.push(json!([prev, id]));
        prev = id;
        c = co;
    }
    if branch {
        layers.push(json!({"id": "side", "kind": "conv", "c_in": c, "c_out": 4, "h": h, "k": [1, 3], "stride": 1, "pad": [0, 1]}));
        layers.push(json!({"id": "pool", "kind": "maxpool", "window": 3, "stride": 1, "pad": 1}));
        layers.push(json!({"id": "cat", "kind": "concat"}));
        edges.extend([
            json!([prev, "side"]),
            json!([prev, "pool"]),
            json!(["side", "cat"]),
            json!(["pool", "cat"]),
        ]);
        prev = "cat".into();
    }
    layers.push(json!({"id": "out", "kind": "output"}));
    edges.push(json!([prev, "out"]));
    json!({"name": "gen", "layers": layers, "edges": edges, "input": "in", "output": "out"})
}

fn arb_doc() -> impl Strategy<Value = serde_json::Value> {
    (1usize..6)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(1usize..9, n + 1),
                prop::collection::vec(prop::sample::select(vec![1usize, 3, 5]), n),
                any::<bool>(),
                5usize..20,
            )
        })
        .prop_map(|(c, k, b, h)| model_doc(&c, &k, b, h))
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(doc in arb_doc()) {
        let g = parse_model(&doc.to_string()).unwrap();
        let again = parse_model(&serialize_model(&g)).unwrap();
        prop_assert_eq!(again, g);
    }

    #[test]
    fn generated_models_are_valid_with_matching_shapes(doc in arb_doc()) {
        let g = parse_model(&doc.to_string()).unwrap();
        let shapes = g.shapes().unwrap();
        for v in g.conv_indices() {
            let m = g.conv(v).unwrap();
            prop_assert_eq!((m.o1, m.o2), (shapes[v].h1, shapes[v].h2));
            prop_assert_eq!(m.c_out, shapes[v].c);
        }
        let order = g.topo_order().unwrap();
        prop_assert_eq!(order.len(), g.len());
    }

    #[test]
    fn output_size_formula(h in 1usize..40, k in 1usize..8, s in 1usize..4, p in 0usize..3) {
        prop_assume!(h + 2 * p >= k);
        let l = LayerMeta::square(2, 3, h, k, s, p);
        prop_assert_eq!(l.o1, (h + 2 * p - k) / s + 1);
        prop_assert_eq!(l.violations().is_empty(), (h + 2 * p - k) % s == 0);
    }

    #[test]
    fn winograd_only_for_stride_one_square_kernels(k1 in 1usize..8, k2 in 1usize..8, s in 1usize..3) {
        let l = LayerMeta::new(4, 4, (16, 16), (k1, k2), s, (k1 / 2, k2 / 2));
        let algos = available_algorithms(&l, (2, 3));
        prop_assert!(algos.len() >= 2);
        let wino = algos.iter().any(|a| a.is_winograd());
        prop_assert_eq!(wino, s == 1 && k1 == k2 && k1 >= 3);
    }
}
