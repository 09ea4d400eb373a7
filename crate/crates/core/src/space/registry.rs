use std::path::Path;
use std::sync::{Arc, OnceLock, RwLock};

use super::{SearchSpaceDef, SlotDef, SpaceDocument, SpaceError, TaskKind};

type Entries = Vec<(String, Arc<SearchSpaceDef>)>;

fn registry() -> &'static RwLock<Entries> {
    static REGISTRY: OnceLock<RwLock<Entries>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(builtin_spaces()))
}

/// Adds a space under `name`, visible process-wide.
pub fn register_space(name: &str, def: SearchSpaceDef) -> Result<(), SpaceError> {
    let key = name.to_ascii_lowercase();
    let mut entries = registry().write().expect("space registry poisoned");
    if entries.iter().any(|(n, _)| *n == key) {
        return Err(SpaceError::DuplicateName(name.to_string()));
    }
    entries.push((key, Arc::new(def)));
    Ok(())
}

/// Looks a space up by registered name or by qualified id (`autogel:v1`),
/// ignoring ASCII case.
pub fn lookup_space(name: &str) -> Result<Arc<SearchSpaceDef>, SpaceError> {
    let key = name.to_ascii_lowercase();
    let entries = registry().read().expect("space registry poisoned");
    entries
        .iter()
        .find(|(n, s)| *n == key || s.qualified_id() == key)
        .map(|(_, s)| Arc::clone(s))
        .ok_or_else(|| SpaceError::UnknownSpace {
            name: name.to_string(),
            registered: entries.iter().map(|(_, s)| s.qualified_id()).collect(),
        })
}

/// Registered `(name, space)` pairs in registration order.
pub fn registered_spaces() -> Vec<(String, Arc<SearchSpaceDef>)> {
    registry().read().expect("space registry poisoned").clone()
}

/// A registered name, or a path to a space-definition document.
pub fn resolve_space(name_or_path: &str) -> Result<Arc<SearchSpaceDef>, SpaceError> {
    match lookup_space(name_or_path) {
        Ok(s) => Ok(s),
        Err(e) => {
            let path = Path::new(name_or_path);
            if path.is_file() {
                SearchSpaceDef::load(path).map(Arc::new)
            } else {
                Err(e)
            }
        }
    }
}

pub fn builtin_spaces() -> Vec<(String, Arc<SearchSpaceDef>)> {
    [
        ("autogel", autogel()),
        ("nbg", nbg()),
        ("relgnn", relgnn()),
        ("hp", crate::hpo::default_hp_space().into_space()),
    ]
    .into_iter()
    .map(|(n, s)| (n.to_string(), Arc::new(s)))
    .collect()
}

fn autogel() -> SearchSpaceDef {
    let agg = ["add", "mean", "max"];
    let agg_doc = ["sum of neighbor messages", "mean of neighbor messages", "element-wise max of neighbor messages"];
    let comb = ["sum", "concat"];
    let comb_doc = ["add self and aggregated features", "concatenate self and aggregated features then project"];
    let act = ["relu", "prelu", "id"];
    let act_doc = ["rectified linear unit", "parametric relu", "identity"];
    let doc = SpaceDocument {
        space_id: "autogel".into(),
        version: 1,
        task_kinds: TaskKind::ALL.to_vec(),
        slots: vec![
            SlotDef::new("l1.agg", &agg).with_doc(&agg_doc),
            SlotDef::new("l1.comb", &comb).with_doc(&comb_doc),
            SlotDef::new("l1.act", &act).with_doc(&act_doc),
            SlotDef::new("l2.agg", &agg).with_doc(&agg_doc),
            SlotDef::new("l2.comb", &comb).with_doc(&comb_doc),
            SlotDef::new("l2.act", &act).with_doc(&act_doc),
            SlotDef::new("skip", &["none", "res", "jk"]).with_doc(&[
                "no skip connection",
                "residual connection from the projected input",
                "jumping knowledge over both layers",
            ]),
            SlotDef::new("pool", &["none", "mean", "max", "sum"]).with_doc(&[
                "no readout (node and link tasks)",
                "mean readout over nodes",
                "max readout over nodes",
                "sum readout over nodes",
            ]),
        ],
        connection_candidates: vec!["stack2".into()],
        operation_prompt: "Each of the two message-passing layers (l1, l2) chooses an aggregator \
            (add, mean, max), a combine step merging self and neighbor features (sum, concat) and \
            an activation (relu, prelu, id). The skip slot picks none, res or jk. The pool slot \
            picks a graph readout: none, mean, max or sum."
            .into(),
        connection_prompt: "Connection stack2: layer l1 feeds layer l2; skip and pool act on top of the stack."
            .into(),
        example_prompt: "autogel:v1|conn=stack2|l1.act=relu|l1.agg=mean|l1.comb=sum|l2.act=id|l2.agg=max|l2.comb=concat|pool=none|skip=res"
            .into(),
    };
    SearchSpaceDef::from_document(doc).expect("built-in autogel space is valid")
}

pub(crate) const NBG_OPS: [&str; 9] = ["gcn", "gat", "sage", "gin", "cheb", "arma", "k_gnn", "skip", "fc"];

fn nbg() -> SearchSpaceDef {
    let docs = [
        "graph convolution",
        "graph attention",
        "GraphSAGE mean aggregation",
        "graph isomorphism network layer",
        "Chebyshev spectral convolution",
        "ARMA filter convolution",
        "higher-order k-GNN layer",
        "identity (skip)",
        "fully connected layer ignoring edges",
    ];
    let slots = (0..4)
        .map(|i| SlotDef::new(&format!("op{i}"), &NBG_OPS).with_doc(&docs))
        .collect();
    let doc = SpaceDocument {
        space_id: "nbg".into(),
        version: 1,
        task_kinds: vec![TaskKind::NodeClassification],
        slots,
        connection_candidates: vec!["chain".into()],
        operation_prompt: "Four operation slots op0, op1, op2, op3, each choosing one of nine \
            operations: gcn, gat, sage, gin, cheb, arma, k_gnn, skip, fc."
            .into(),
        connection_prompt: "Connection chain: op0 -> op1 -> op2 -> op3, each operation consuming the previous output."
            .into(),
        example_prompt: "nbg:v1|conn=chain|op0=gcn|op1=gat|op2=skip|op3=fc".into(),
    };
    SearchSpaceDef::from_document(doc).expect("built-in nbg space is valid")
}

fn relgnn() -> SearchSpaceDef {
    let rel = ["gcn", "gat", "sum"];
    let rel_doc = ["relation-specific graph convolution", "relation-specific attention", "plain sum of neighbor features"];
    let mut slots: Vec<SlotDef> = (0..3)
        .map(|i| SlotDef::new(&format!("r{i}.agg"), &rel).with_doc(&rel_doc))
        .collect();
    slots.push(SlotDef::new("fusion", &["mean", "attn", "concat"]).with_doc(&[
        "average the per-relation outputs",
        "semantic attention across relations",
        "concatenate per-relation outputs then project",
    ]));
    let doc = SpaceDocument {
        space_id: "relgnn".into(),
        version: 1,
        task_kinds: vec![TaskKind::NodeClassification, TaskKind::LinkPrediction],
        slots,
        connection_candidates: vec!["per_relation".into()],
        operation_prompt: "Heterogeneous graph with relations r0, r1, r2. Each relation slot \
            (r0.agg, r1.agg, r2.agg) aggregates with gcn, gat or sum; the fusion slot merges \
            relations with mean, attn or concat."
            .into(),
        connection_prompt: "Connection per_relation: one aggregator per relation, outputs fused per node type."
            .into(),
        example_prompt: "relgnn:v1|conn=per_relation|fusion=attn|r0.agg=gat|r1.agg=gcn|r2.agg=sum".into(),
    };
    SearchSpaceDef::from_document(doc).expect("built-in relgnn space is valid")
}
