//! Seeded random databases for equivalence testing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Database, Relation, Value};
use crate::fir::rules::ForeignKey;

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub seed: u64,
    /// Rows of relations that no foreign key references.
    pub rows: usize,
    /// Referencing rows per referenced row.
    pub fk_ratio: usize,
    /// Upper bound of generated integers; comparisons against
    /// `0.8 * value_range` select about 20% of rows.
    pub value_range: i64,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            seed: 0,
            rows: 50,
            fk_ratio: 10,
            value_range: 125,
        }
    }
}

/// Integer-valued relations over `columns`. A column named in a foreign key
/// draws from the referenced key's values; a referenced key column holds
/// distinct values; columns named `month` range over 1..=12.
pub fn random_database(
    columns: &BTreeMap<String, Vec<String>>,
    foreign_keys: &[ForeignKey],
    cfg: &GenConfig,
) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let referenced = |rel: &str| foreign_keys.iter().any(|fk| fk.ref_relation == rel);
    let parent_rows = (cfg.rows / cfg.fk_ratio.max(1)).max(1);
    let mut db = Database {
        foreign_keys: foreign_keys.to_vec(),
        ..Database::default()
    };
    // Referenced relations first, so their keys exist.
    let mut order: Vec<&String> = columns.keys().filter(|r| referenced(r)).collect();
    order.extend(columns.keys().filter(|r| !referenced(r)));
    for rel in order {
        let schema = &columns[rel];
        let n = if referenced(rel) { parent_rows } else { cfg.rows };
        let n = rng.gen_range(0..=n);
        let mut rows: Vec<Vec<Value>> = (0..n).map(|_| Vec::with_capacity(schema.len())).collect();
        for col in schema {
            let is_key = foreign_keys.iter().any(|fk| fk.ref_relation == *rel && fk.ref_column == *col);
            let fk = foreign_keys.iter().find(|fk| fk.relation == *rel && fk.column == *col);
            let keys: Option<Vec<Value>> = fk.map(|fk| {
                let parent = &db.relations[&fk.ref_relation];
                let i = parent.schema.iter().position(|c| *c == fk.ref_column).unwrap();
                parent.rows.iter().map(|r| r[i].clone()).collect()
            });
            for (k, row) in rows.iter_mut().enumerate() {
                let v = match &keys {
                    Some(ks) if !ks.is_empty() => ks[rng.gen_range(0..ks.len())].clone(),
                    Some(_) => Value::Null,
                    None if is_key => Value::Int(k as i64 + 1),
                    None if col == "month" => Value::Int(rng.gen_range(1..=12)),
                    None => Value::Int(rng.gen_range(0..cfg.value_range)),
                };
                row.push(v);
            }
        }
        // A referencing relation with no parent rows would violate its key.
        if keys_missing(rel, &rows, schema, foreign_keys) {
            rows.clear();
        }
        db.relations.insert(
            rel.clone(),
            Relation {
                schema: schema.clone(),
                rows,
            },
        );
    }
    db
}

fn keys_missing(rel: &str, rows: &[Vec<Value>], schema: &[String], fks: &[ForeignKey]) -> bool {
    fks.iter().filter(|fk| fk.relation == rel).any(|fk| {
        let i = schema.iter().position(|c| *c == fk.column);
        i.is_some_and(|i| rows.iter().any(|r| r[i] == Value::Null))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> (BTreeMap<String, Vec<String>>, Vec<ForeignKey>) {
        let mut cols = BTreeMap::new();
        cols.insert("orders".to_string(), vec!["o_id".to_string(), "o_customer_sk".to_string()]);
        cols.insert("customer".to_string(), vec!["c_customer_sk".to_string(), "c_birth_year".to_string()]);
        let fk = ForeignKey {
            relation: "orders".into(),
            column: "o_customer_sk".into(),
            ref_relation: "customer".into(),
            ref_column: "c_customer_sk".into(),
        };
        (cols, vec![fk])
    }

    #[test]
    fn foreign_keys_resolve() {
        let (cols, fks) = schema();
        for seed in 0..20 {
            let db = random_database(&cols, &fks, &GenConfig { seed, ..GenConfig::default() });
            let keys: Vec<&Value> = db.relations["customer"].rows.iter().map(|r| &r[0]).collect();
            for o in &db.relations["orders"].rows {
                assert!(keys.contains(&&o[1]));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (cols, fks) = schema();
        let cfg = GenConfig { seed: 7, ..GenConfig::default() };
        assert_eq!(random_database(&cols, &fks, &cfg), random_database(&cols, &fks, &cfg));
    }
}
