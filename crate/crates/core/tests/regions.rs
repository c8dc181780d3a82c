use std::collections::BTreeSet;

use cobra::frontend::{build_cfg, parse};
use cobra::regions::{build_region_tree, live_boundary, Region, RegionKind, RegionTree};
use cobra::samples;

fn analyse(src: &str) -> (RegionTree, cobra::frontend::Cfg, cobra::frontend::FunctionDef) {
    let p = parse(src).unwrap();
    let f = p.functions[0].clone();
    let cfg = build_cfg(&f);
    assert!(cfg.audit().is_empty(), "{:?}", cfg.audit());
    (build_region_tree(&f, &cfg), cfg, f)
}

fn set(vars: &[&str]) -> BTreeSet<String> {
    vars.iter().map(|s| s.to_string()).collect()
}

#[test]
fn p0_region_layout() {
    let (t, cfg, _) = analyse(samples::P0);
    assert_eq!(t.root.to_string(), "S2-7 { B2; L3-7 { B3; S4-6 { B4; B5; B6 } } }");
    let header = cfg.blocks.iter().filter(|b| b.succs.len() == 2).count();
    assert_eq!(header, 1);
}

#[test]
fn m0_region_layout() {
    let (t, _, _) = analyse(samples::M0);
    assert_eq!(
        t.root.to_string(),
        "S2-9 { S2-3 { B2; B3 }; L4-7 { B4; S5-6 { B5; B6 } }; S8-9 { B8; B9 } }"
    );
}

#[test]
fn loop_boundaries() {
    let (t, cfg, _) = analyse(samples::P0);
    let l = t.root.find("L3-7").unwrap();
    assert_eq!(live_boundary(l, &cfg), (set(&["result"]), set(&["result"])));
    let (t, cfg, _) = analyse(samples::M0);
    let l = t.root.find("L4-7").unwrap();
    assert_eq!(live_boundary(l, &cfg), (set(&["cSum", "sum"]), set(&["cSum", "sum"])));
}

#[test]
fn decomposed_conjunction_is_black_boxed() {
    let (t, _, _) = analyse(samples::CONJ);
    assert_eq!(t.root.kind, RegionKind::Sequential);
    let kinds: Vec<RegionKind> = t.root.children.iter().map(|c| c.kind).collect();
    assert_eq!(kinds, vec![RegionKind::BasicBlock, RegionKind::BlackBox, RegionKind::Sequential]);
    let bb = &t.root.children[1];
    assert_eq!(bb.name, "X3-5");
    let partial = bb
        .children
        .iter()
        .filter(|c| matches!(c.leaf, Some(cobra::regions::Leaf::Partial { .. })))
        .count();
    assert_eq!(partial, 2);
}

fn check_laminar(r: &Region) {
    let mut prev_end = None;
    for c in &r.children {
        if let (Some((a, b)), Some((lo, hi))) = (c.lines, r.lines) {
            assert!(lo <= a && b <= hi, "{} escapes {}", c.name, r.name);
            if let Some(e) = prev_end {
                assert!(e <= a, "{} overlaps its sibling", c.name);
            }
            prev_end = Some(b);
        }
        check_laminar(c);
    }
    if r.kind == RegionKind::Sequential {
        assert!(r.children.len() >= 2);
    }
}

#[test]
fn shipped_programs_have_well_formed_trees() {
    for (name, src) in samples::ALL {
        let (t, _, f) = analyse(src);
        check_laminar(&t.root);
        let order: Vec<usize> = f.statements().iter().map(|s| s.span.id).collect();
        assert_eq!(t.root.leaf_statements(), order, "{name}");
    }
}
