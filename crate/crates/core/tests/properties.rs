use std::collections::BTreeSet;

use proptest::prelude::*;

use snc::analysis::analyze;
use snc::models::{constant_rate_service, exponential_arrival};
use snc::netio::{parse_document, FlowRecord, InterfaceRecord, NetworkDocument, ParseOptions};
use snc::optimize::{evaluate_query, grid_search_minimize};
use snc::{
    AnalysisRequest, Arrival, ArrivalModel, BoundKind, BoundQuery, Dependencies, FlowId, GridConfig, Network,
    ParamAssignment, Service, ServiceModel, VertexId,
};

fn deps() -> impl Strategy<Value = Dependencies> {
    (
        prop::collection::btree_set(0u32..5, 0..3),
        prop::collection::btree_set(0u32..5, 0..3),
    )
        .prop_map(|(f, s)| Dependencies {
            flows: f.into_iter().map(FlowId).collect(),
            services: s.into_iter().map(VertexId).collect(),
        })
}

fn arrival() -> impl Strategy<Value = Arrival> {
    (0.5..4.0f64, deps()).prop_map(|(lambda, d)| Arrival { deps: d, ..exponential_arrival(lambda).unwrap() })
}

fn service() -> impl Strategy<Value = Service> {
    (1.0..20.0f64, deps()).prop_map(|(r, d)| Service { deps: d, ..constant_rate_service(r).unwrap() })
}

fn point(theta: f64, p: f64, net: &Network) -> ParamAssignment {
    net.hoelders().keys().fold(ParamAssignment::new(theta), |a, &h| a.with_hoelder(h, p))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn operations_union_dependencies_and_register_hoelder_on_overlap(
        a1 in arrival(), a2 in arrival(), s1 in service(), s2 in service()
    ) {
        let mut net = Network::new();
        let before = net.hoelder_count();
        let m = net.multiplex(&a1, &a2);
        prop_assert_eq!(&m.deps, &a1.deps.union(&a2.deps));
        prop_assert_eq!(net.hoelder_count() - before, a1.deps.intersects(&a2.deps) as usize);

        let before = net.hoelder_count();
        let c = net.convolve(&s1, &s2);
        prop_assert_eq!(&c.deps, &s1.deps.union(&s2.deps));
        prop_assert_eq!(net.hoelder_count() - before, s1.deps.intersects(&s2.deps) as usize);

        let before = net.hoelder_count();
        let l = net.leftover(&s1, &a1);
        prop_assert_eq!(&l.deps, &s1.deps.union(&a1.deps));
        prop_assert_eq!(net.hoelder_count() - before, s1.deps.intersects(&a1.deps) as usize);

        let before = net.hoelder_count();
        let o = net.output_bound(&a1, &s1);
        prop_assert_eq!(&o.deps, &a1.deps.union(&s1.deps));
        prop_assert_eq!(net.hoelder_count() - before, a1.deps.intersects(&s1.deps) as usize);
    }

    #[test]
    fn independent_multiplex_commutes(l1 in 0.5..4.0f64, l2 in 0.5..4.0f64, frac in 0.05..0.95f64) {
        let a1 = exponential_arrival(l1).unwrap();
        let a2 = exponential_arrival(l2).unwrap();
        let mut net = Network::new();
        let x = net.multiplex(&a1, &a2);
        let y = net.multiplex(&a2, &a1);
        let at = ParamAssignment::new(frac * l1.min(l2));
        prop_assert!(close(x.rho.evaluate(&at).unwrap(), y.rho.evaluate(&at).unwrap()));
        prop_assert!(close(x.sigma.evaluate(&at).unwrap(), y.sigma.evaluate(&at).unwrap()));
    }

    #[test]
    fn dependent_multiplex_commutes_at_p_two(l1 in 0.5..4.0f64, l2 in 0.5..4.0f64, frac in 0.05..0.45f64) {
        let shared = Dependencies { flows: BTreeSet::from([FlowId(1)]), services: BTreeSet::new() };
        let a1 = Arrival { deps: shared.clone(), ..exponential_arrival(l1).unwrap() };
        let a2 = Arrival { deps: shared, ..exponential_arrival(l2).unwrap() };
        let mut net = Network::new();
        let x = net.multiplex(&a1, &a2);
        let y = net.multiplex(&a2, &a1);
        let at = point(frac * l1.min(l2), 2.0, &net);
        prop_assert!(close(x.rho.evaluate(&at).unwrap(), y.rho.evaluate(&at).unwrap()));
    }

    #[test]
    fn independent_convolution_commutes(r1 in 1.0..20.0f64, gap in 0.1..5.0f64, theta in 0.05..2.0f64) {
        let s1 = constant_rate_service(r1).unwrap();
        let s2 = constant_rate_service(r1 + gap).unwrap();
        let mut net = Network::new();
        let x = net.convolve(&s1, &s2);
        let y = net.convolve(&s2, &s1);
        let at = ParamAssignment::new(theta);
        prop_assert!(close(x.rho.evaluate(&at).unwrap(), -r1));
        prop_assert!(close(x.sigma.evaluate(&at).unwrap(), y.sigma.evaluate(&at).unwrap()));
    }
}

fn arrival_model() -> impl Strategy<Value = ArrivalModel> {
    prop_oneof![
        (0.1..5.0f64).prop_map(|rate| ArrivalModel::Constant { rate }),
        (0.1..5.0f64).prop_map(|mean| ArrivalModel::Exponential { mean }),
        (0.1..5.0f64, 0.1..3.0f64, 1.0..4.0f64)
            .prop_map(|(rate, decay, prefactor)| ArrivalModel::Ebb { rate, decay, prefactor }),
        (0.1..5.0f64, 0.0..5.0f64)
            .prop_map(|(r, b)| ArrivalModel::StationaryTb { rates: vec![r], buckets: vec![b], max_theta: None }),
    ]
}

/// Feedforward documents: every flow visits vertices in increasing index order.
fn document() -> impl Strategy<Value = NetworkDocument> {
    (1usize..5).prop_flat_map(|n| {
        let interfaces = prop::collection::vec((0.5..50.0f64, any::<bool>()), n);
        let flow = (
            prop::collection::btree_set(0..n, 1..=n),
            prop::collection::vec(0u32..4, n),
            arrival_model(),
        );
        (interfaces, prop::collection::vec(flow, 1..5)).prop_map(|(ifs, flows)| NetworkDocument {
            interfaces: ifs
                .into_iter()
                .enumerate()
                .map(|(i, (rate, shifted))| InterfaceRecord {
                    name: format!("v{i}"),
                    scheduling: "FIFO".into(),
                    service: if shifted {
                        ServiceModel::ShiftedConstantRate { rate }
                    } else {
                        ServiceModel::ConstantRate { rate }
                    },
                })
                .collect(),
            flows: flows
                .into_iter()
                .enumerate()
                .map(|(i, (route, prios, arrival))| FlowRecord {
                    name: format!("f{i}"),
                    hops: route.into_iter().map(|v| (format!("v{v}"), prios[v])).collect(),
                    arrival,
                })
                .collect(),
            lines: Vec::new(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn documents_round_trip(doc in document()) {
        let text = doc.to_string();
        let back = parse_document(&text, ParseOptions::default()).unwrap();
        prop_assert!(back.same_structure(&doc));
        prop_assert_eq!(back.to_string(), text.clone());
        let net = back.to_network().unwrap();
        prop_assert_eq!(snc::netio::serialize_network(&net).unwrap(), text);
    }

    #[test]
    fn local_analysis_keeps_network_invariants(doc in document()) {
        let net = doc.to_network().unwrap();
        for f in net.flows() {
            for &v in &f.path {
                let req = AnalysisRequest::Local { flow: f.id, vertex: v, kind: BoundKind::Delay };
                let (bound, reduced) = analyze(&net, &req).unwrap();
                prop_assert!(reduced.check_invariants().is_ok(), "{:?}", reduced.check_invariants());
                let registered: BTreeSet<_> = reduced.hoelders().keys().copied().collect();
                prop_assert!(bound.hoelder_ids().is_subset(&registered));
            }
        }
        prop_assert!(net.check_invariants().is_ok());
        prop_assert_eq!(net.hoelder_count(), 0);
    }
}

fn single_node(lambda: f64, rate: f64, kind: BoundKind) -> snc::PerformanceBound {
    let mut net = Network::new();
    let v = net.add_vertex("s", constant_rate_service(rate).unwrap()).unwrap();
    let f = net.add_flow("f", &[v], &[0], exponential_arrival(lambda).unwrap()).unwrap();
    analyze(&net, &AnalysisRequest::Local { flow: f, vertex: v, kind }).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_refinement_never_worsens(lambda in 0.3..2.0f64, load in 0.2..0.8f64, x in 1.0..30.0f64) {
        let bound = single_node(lambda, 1.0 / (lambda * load), BoundKind::Backlog);
        let q = BoundQuery::forward(bound, x).unwrap();
        let coarse = GridConfig { theta_granularity: 0.02, ..GridConfig::default() };
        let fine = GridConfig { theta_granularity: 0.01, ..GridConfig::default() };
        let a = grid_search_minimize(&q, &coarse).unwrap();
        let b = grid_search_minimize(&q, &fine).unwrap();
        prop_assert!(b.value <= a.value);
    }

    #[test]
    fn inverse_and_forward_agree_at_the_argmin(lambda in 0.3..2.0f64, load in 0.2..0.8f64, eps in 1e-6..0.5f64) {
        let bound = single_node(lambda, 1.0 / (lambda * load), BoundKind::Delay);
        let inv = grid_search_minimize(&BoundQuery::inverse(bound.clone(), eps).unwrap(), &GridConfig::default()).unwrap();
        let back = evaluate_query(&BoundQuery::forward(bound, inv.value).unwrap(), &inv.argmin).unwrap();
        prop_assert!((back - eps).abs() <= 1e-9 * eps);
    }

    #[test]
    fn forward_bound_is_non_increasing(lambda in 0.3..2.0f64, load in 0.2..0.8f64, x in 0.0..20.0f64, dx in 0.0..10.0f64) {
        let bound = single_node(lambda, 1.0 / (lambda * load), BoundKind::Delay);
        let cfg = GridConfig::default();
        let a = grid_search_minimize(&BoundQuery::forward(bound.clone(), x).unwrap(), &cfg).unwrap();
        let b = grid_search_minimize(&BoundQuery::forward(bound, x + dx).unwrap(), &cfg).unwrap();
        prop_assert!(b.value <= a.value);
    }
}

#[test]
fn thread_count_does_not_change_the_optimum() {
    let mut net = Network::new();
    let r1 = net.add_vertex_model("r1", ServiceModel::ShiftedConstantRate { rate: 8.0 }).unwrap();
    let r2 = net.add_vertex_model("r2", ServiceModel::ShiftedConstantRate { rate: 8.0 }).unwrap();
    let foi = net.add_flow_model("foi", &[r1, r2], &[1, 1], ArrivalModel::Exponential { mean: 2.0 }).unwrap();
    let x = net.add_flow_model("x", &[r1, r2], &[0, 0], ArrivalModel::Exponential { mean: 4.0 }).unwrap();
    let req = AnalysisRequest::Ladder { flow: foi, crossflow: x, path: vec![r1, r2] };
    let bound = analyze(&net, &req).unwrap().0;
    let q = BoundQuery::inverse(bound, 1e-3).unwrap();
    let results: Vec<_> = [1, 2, 3, 8]
        .into_iter()
        .map(|t| grid_search_minimize(&q, &GridConfig { threads: Some(t), ..GridConfig::default() }).unwrap())
        .collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(results[0].argmin.hoelder.len(), 1);
}
