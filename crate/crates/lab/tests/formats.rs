use llflow::formats::{
    fmt17, ledger_header, read_ledger, read_snapshot_index, to_json, write_ledger, write_snapshot_index, Llf1,
};
use llflow::Overrides;
use llflow_core::ledger::{EnergyLedger, LedgerRow};
use llflow_core::{Field, Grid, Point};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn llf1_roundtrips_bit_exactly(half in 16usize..24, l in 0.1f64..100.0, torus in any::<bool>(), t in 0.0f64..1e4, seed in any::<u64>()) {
        let n = 2 * half;
        let m = if torus { 4 } else { 3 };
        let g = Grid::new(n, l).unwrap();
        let mut x = seed;
        let data: Vec<f64> = (0..n * n * m).map(|_| {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((x >> 12) | 0x3ff0_0000_0000_0000) - 1.5
        }).collect();
        let f = Field::from_values(g, m, data, &vec![0.0; m]).unwrap();
        let s = Llf1::from_field(&f, t);
        let back = Llf1::decode(&s.encode()).unwrap();
        prop_assert_eq!(back.grid, g);
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
        prop_assert!(back.data.iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn fmt17_roundtrips(v in finite()) {
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn ledger_csv_roundtrips(rows in prop::collection::vec(prop::collection::vec(finite(), 9), 1..12)) {
        let dir = tempfile::tempdir().unwrap();
        let mut ledger = EnergyLedger::new(vec![4.0, 1.0, 0.25]);
        for r in &rows {
            ledger.push(LedgerRow {
                t: r[0], energy: r[1], diss_cum: r[2], l4_cum: r[3], unit_drift: r[4],
                sup_local: r[5..8].to_vec(), argmax: Point::new(r[8], -r[8]),
            });
        }
        let p = dir.path().join("l.csv");
        write_ledger(&p, &ledger).unwrap();
        let back = read_ledger(&p).unwrap();
        prop_assert_eq!(back.radii(), ledger.radii());
        prop_assert_eq!(back.rows(), ledger.rows());
    }
}

#[test]
fn llf1_rejects_malformed_headers() {
    let g = Grid::new(16, 1.0).unwrap();
    let good = Llf1::from_field(&Field::constant(g, &[0.0, 0.0, 1.0]), 0.0).encode();
    let body = &good[good.iter().position(|&b| b == b'\n').unwrap() + 1..];
    for header in [
        "LLF1 n=16 L=1 m=3\n",
        "LLF1 n=16 L=1 m=3 t=0 q=1\n",
        "LLF1 n=15 L=1 m=3 t=0\n",
        "LLF1 n=16 L=-1 m=3 t=0\n",
        "LLF1 n=16 L=1 m=4 t=0\n",
        "LLF1 n=sixteen L=1 m=3 t=0\n",
    ] {
        let mut b = header.as_bytes().to_vec();
        b.extend_from_slice(body);
        assert!(Llf1::decode(&b).is_err(), "{header}");
    }
    // a valid header with a payload of unknown target dimension decodes but
    // does not convert
    let mut b = b"LLF1 n=16 L=1 m=2 t=0\n".to_vec();
    b.extend_from_slice(&body[..16 * 16 * 2 * 8]);
    assert!(Llf1::decode(&b).unwrap().into_spin_field().is_err());
}

#[test]
fn ledger_reader_rejects_foreign_headers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "t,E,diss,l4_cum,unit_drift,argmax_x,argmax_y\n").unwrap();
    assert!(read_ledger(&p).is_err());
    std::fs::write(&p, format!("{}\n0,1,2\n", ledger_header(&[1.0]))).unwrap();
    assert!(read_ledger(&p).is_err());
}

#[test]
fn snapshot_index_resolves_relative_to_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run_snapshots.csv");
    write_snapshot_index(&p, &[("a.llf1".into(), 0.0, 0.0), ("b.llf1".into(), 0.5, 0.25)]).unwrap();
    let e = read_snapshot_index(&p).unwrap();
    assert_eq!(e.len(), 2);
    assert_eq!(e[1].0, dir.path().join("b.llf1"));
    assert_eq!((e[1].1, e[1].2), (0.5, 0.25));
}

#[test]
fn json_reports_carry_schema_version() {
    let v: serde_json::Value = serde_json::from_str(&to_json(&serde_json::json!({"a": 1})).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["a"], 1);
}

#[test]
fn override_grammar() {
    assert!(Overrides::parse(&["sim.alpha=2", "sim.alpha=2"]).is_ok());
    assert!(Overrides::parse(&["sim.alpha=2", "sim.alpha=3"]).is_err());
    assert!(Overrides::parse(&["alpha=2"]).is_err());
    assert!(Overrides::parse(&["sim.alpha"]).is_err());
    let (_, cfg) = llflow::ScenarioConfig::load(
        "torus-decay",
        &Overrides::parse(&["sim.grid_n=64", "sim.scheme=imex", "analysis.radii=[2.0, 1.0]"]).unwrap(),
    )
    .unwrap();
    assert_eq!(cfg.sim.grid_n, 64);
    assert_eq!(cfg.analysis.radii, Some(vec![2.0, 1.0]));
    for bad in [["sim.grid_n=63"], ["sim.alpha=0"], ["sim.unknown=1"], ["nosuch.key=1"], ["sim.half_extent=-1"]] {
        let o = Overrides::parse(&bad).unwrap();
        assert!(llflow::ScenarioConfig::load("torus-decay", &o).is_err(), "{bad:?}");
    }
    assert!(matches!(
        llflow::ScenarioConfig::load("no-such-preset", &Overrides::default()),
        Err(llflow::LabError::UnknownPreset { .. })
    ));
}
