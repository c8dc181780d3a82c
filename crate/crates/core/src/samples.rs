//! Programs shipped with the crate, embedded for tests and the CLI.

pub const P0: &str = include_str!("../programs/p0.cob");
pub const M0: &str = include_str!("../programs/m0.cob");
pub const NESTED_JOIN: &str = include_str!("../programs/nested_join.cob");
pub const FILTER: &str = include_str!("../programs/filter.cob");
pub const ITEMS: &str = include_str!("../programs/items.cob");
pub const CONJ: &str = include_str!("../programs/conj.cob");
pub const REVENUE: &str = include_str!("../programs/revenue.cob");
pub const TOP: &str = include_str!("../programs/top.cob");

/// `(file name, source)` of every shipped program.
pub const ALL: &[(&str, &str)] = &[
    ("p0.cob", P0),
    ("m0.cob", M0),
    ("nested_join.cob", NESTED_JOIN),
    ("filter.cob", FILTER),
    ("items.cob", ITEMS),
    ("conj.cob", CONJ),
    ("revenue.cob", REVENUE),
    ("top.cob", TOP),
];
