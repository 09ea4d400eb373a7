use std::collections::BTreeMap;

use super::{join_violations, ArchitectureDescriptor, SearchSpaceDef, SpaceError, CONNECTION_KEY};

/// Canonical string for a descriptor valid against `space`:
/// `<space_id>:v<version>|conn=<motif>|<slot>=<op>|...`, slots sorted by id.
pub fn encode(space: &SearchSpaceDef, d: &ArchitectureDescriptor) -> Result<String, SpaceError> {
    space
        .validate(d)
        .map_err(|v| SpaceError::InvalidDescriptor(join_violations(&v)))?;
    Ok(d.canonical())
}

/// Inverse of [`encode`]. Segments after the header may come in any order;
/// the returned descriptor is normalized.
pub fn decode(space: &SearchSpaceDef, text: &str) -> Result<ArchitectureDescriptor, SpaceError> {
    let text = text.trim();
    let mut parts = text.split('|');
    let header = parts.next().unwrap_or_default();
    let (space_id, version) = split_header(header)?;
    if space_id != space.space_id() || version != space.version() {
        return Err(SpaceError::WrongSpace {
            expected: space.qualified_id(),
            found: header.to_string(),
        });
    }

    let mut connection = None;
    let mut assignments = BTreeMap::new();
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| SpaceError::ParseError(format!("segment {part:?} is not key=value")))?;
        if key.is_empty() || value.is_empty() {
            return Err(SpaceError::ParseError(format!("empty key or value in {part:?}")));
        }
        if key == CONNECTION_KEY {
            if connection.replace(value).is_some() {
                return Err(SpaceError::ParseError("connection given twice".into()));
            }
            if !space.connection_candidates().iter().any(|c| c == value) {
                return Err(SpaceError::UnknownOperation(key.into(), value.into()));
            }
            continue;
        }
        let slot = space
            .slot(key)
            .ok_or_else(|| SpaceError::UnknownSlot(key.into()))?;
        if slot.index_of(value).is_none() {
            return Err(SpaceError::UnknownOperation(key.into(), value.into()));
        }
        if assignments.insert(key.to_string(), value.to_string()).is_some() {
            return Err(SpaceError::ParseError(format!("slot {key:?} given twice")));
        }
    }

    let connection = connection
        .ok_or_else(|| SpaceError::ParseError(format!("missing {CONNECTION_KEY}= segment")))?;
    if let Some(missing) = space
        .canonical_slots()
        .find(|s| !assignments.contains_key(&s.slot_id))
    {
        return Err(SpaceError::ParseError(format!("missing slot {:?}", missing.slot_id)));
    }
    Ok(ArchitectureDescriptor {
        space_id: space_id.to_string(),
        version,
        assignments,
        connection: connection.to_string(),
    })
}

/// Splits `name:vN`.
pub fn split_header(header: &str) -> Result<(&str, u32), SpaceError> {
    let (id, ver) = header
        .rsplit_once(":v")
        .ok_or_else(|| SpaceError::ParseError(format!("header {header:?} is not <space>:v<version>")))?;
    let version = ver
        .parse()
        .map_err(|_| SpaceError::ParseError(format!("bad version in header {header:?}")))?;
    if id.is_empty() {
        return Err(SpaceError::ParseError("empty space id".into()));
    }
    Ok((id, version))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::lookup_space;
    use proptest::prelude::*;

    #[test]
    fn encode_example() {
        let s = lookup_space("autogel").unwrap();
        let d = s
            .descriptor(
                "stack2",
                [
                    ("l1.agg", "max"),
                    ("l1.comb", "concat"),
                    ("l1.act", "relu"),
                    ("l2.agg", "mean"),
                    ("l2.comb", "sum"),
                    ("l2.act", "id"),
                    ("skip", "res"),
                    ("pool", "none"),
                ],
            )
            .unwrap();
        assert_eq!(
            encode(&s, &d).unwrap(),
            "autogel:v1|conn=stack2|l1.act=relu|l1.agg=max|l1.comb=concat|l2.act=id|l2.agg=mean|l2.comb=sum|pool=none|skip=res"
        );
    }

    #[test]
    fn encode_first_nbg() {
        let s = lookup_space("nbg").unwrap();
        assert_eq!(
            encode(&s, &s.first_descriptor()).unwrap(),
            "nbg:v1|conn=chain|op0=gcn|op1=gcn|op2=gcn|op3=gcn"
        );
    }

    #[test]
    fn encode_rejects_missing_slot() {
        let s = lookup_space("autogel").unwrap();
        let mut d = s.first_descriptor();
        d.assignments.remove("pool");
        assert!(matches!(encode(&s, &d), Err(SpaceError::InvalidDescriptor(m)) if m.contains("pool")));
    }

    #[test]
    fn encode_ignores_insertion_order() {
        let s = lookup_space("nbg").unwrap();
        let a = s
            .descriptor("chain", [("op0", "gat"), ("op1", "gin"), ("op2", "fc"), ("op3", "skip")])
            .unwrap();
        let b = s
            .descriptor("chain", [("op3", "skip"), ("op2", "fc"), ("op1", "gin"), ("op0", "gat")])
            .unwrap();
        assert_eq!(encode(&s, &a).unwrap(), encode(&s, &b).unwrap());
    }

    #[test]
    fn decode_errors() {
        let s = lookup_space("autogel").unwrap();
        let text = "autogel:v1|conn=stack2|l1.act=relu|l1.agg=foo|l1.comb=concat|l2.act=id|l2.agg=mean|l2.comb=sum|pool=none|skip=res";
        assert_eq!(
            decode(&s, text),
            Err(SpaceError::UnknownOperation("l1.agg".into(), "foo".into()))
        );
        assert!(matches!(
            decode(&s, "nbg:v1|conn=chain|op0=gcn|op1=gcn|op2=gcn|op3=gcn"),
            Err(SpaceError::WrongSpace { .. })
        ));
        assert!(matches!(decode(&s, "autogel:v2|conn=stack2"), Err(SpaceError::WrongSpace { .. })));
        assert!(matches!(
            decode(&s, "autogel:v1|conn=stack2|bogus=1"),
            Err(SpaceError::UnknownSlot(k)) if k == "bogus"
        ));
        assert!(matches!(decode(&s, "autogel:v1|conn=stack2|l1.act"), Err(SpaceError::ParseError(_))));
        assert!(matches!(decode(&s, "just prose"), Err(SpaceError::ParseError(_))));
        assert!(matches!(decode(&s, "autogel:v1|conn=stack2|l1.act=relu"), Err(SpaceError::ParseError(_))));
    }

    #[test]
    fn decode_tolerates_reordering() {
        let s = lookup_space("nbg").unwrap();
        let d = decode(&s, "nbg:v1|op3=fc|op1=gat|conn=chain|op0=gcn|op2=skip").unwrap();
        assert_eq!(d.canonical(), "nbg:v1|conn=chain|op0=gcn|op1=gat|op2=skip|op3=fc");
    }

    #[test]
    fn exhaustive_round_trip_autogel() {
        let s = lookup_space("autogel").unwrap();
        let mut n = 0;
        for d in s.enumerate() {
            assert_eq!(decode(&s, &encode(&s, &d).unwrap()).unwrap(), d);
            n += 1;
        }
        assert_eq!(n, 3888);
    }

    proptest! {
        #[test]
        fn round_trip_random_nbg(seed in any::<u64>()) {
            let s = lookup_space("nbg").unwrap();
            let d = s.random_descriptor(seed);
            prop_assert_eq!(decode(&s, &encode(&s, &d).unwrap()).unwrap(), d);
        }

        #[test]
        fn decode_never_panics(text in ".{0,80}") {
            let s = lookup_space("autogel").unwrap();
            let _ = decode(&s, &text);
        }
    }
}
