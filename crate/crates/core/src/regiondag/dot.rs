use std::fmt::Write;

use super::RegionDag;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Graphviz rendering: OR nodes are ellipses, AND nodes boxes, in id order.
pub fn export_dot(dag: &RegionDag) -> String {
    let mut out = String::from("digraph regiondag {\n  rankdir=TB;\n");
    for o in &dag.ors {
        let _ = writeln!(
            out,
            "  or{} [shape=ellipse, label=\"{}\"];",
            o.id,
            escape(&o.label)
        );
    }
    for a in &dag.ands {
        let _ = writeln!(
            out,
            "  and{} [shape=box, label=\"{}\"];",
            a.id,
            escape(&a.op.label())
        );
    }
    for o in &dag.ors {
        for a in &o.alternatives {
            let _ = writeln!(out, "  or{} -> and{};", o.id, a);
        }
    }
    for a in &dag.ands {
        for c in &a.children {
            let _ = writeln!(out, "  and{} -> or{};", a.id, c);
        }
    }
    out.push_str("}\n");
    out
}
