use segnn::harness::{check_equivariance, check_gradients, check_invariance, permutation_error, CheckOptions, FD_EPS};
use segnn::o3::{cartesian_to_irrep, norm, Vec3};
use segnn::rng::{normal, seeded, Rng};
use segnn::segnn::{build_edges, Aggregation, Graph, HeadKind, ModelConfig, NeighborRule, Network, Variant};
use segnn::steerable::{Fault, LayoutMode, SteerableTensor};

fn vec3(rng: &mut Rng) -> Vec3 {
    [normal(rng), normal(rng), normal(rng)]
}

/// Point cloud carrying speed, centred position and velocity, the N-body
/// input layout.
fn random_graph(rng: &mut Rng, n: usize, rule: NeighborRule) -> Graph {
    let positions: Vec<Vec3> = (0..n).map(|_| vec3(rng)).collect();
    let velocities: Vec<Vec3> = (0..n).map(|_| vec3(rng)).collect();
    let mut centre = [0.0; 3];
    for p in &positions {
        for k in 0..3 {
            centre[k] += p[k] / n as f64;
        }
    }
    let mut feats = Vec::with_capacity(n * 7);
    for (p, v) in positions.iter().zip(&velocities) {
        feats.push(norm(v));
        feats.extend(cartesian_to_irrep(&[p[0] - centre[0], p[1] - centre[1], p[2] - centre[2]]));
        feats.extend(cartesian_to_irrep(v));
    }
    let layout = "1x0e+1x1o+1x1o".parse().unwrap();
    let edges = build_edges(&positions, rule);
    let mut g = Graph::new(positions, SteerableTensor::from_rows(layout, n, feats).unwrap(), edges).unwrap();
    g.node_vectors.insert("velocity".into(), velocities);
    g
}

fn config(variant: Variant, l_f: u32, l_a: u32) -> ModelConfig {
    ModelConfig {
        variant,
        l_f,
        l_a,
        hidden_dim: 16,
        num_layers: 3,
        node_vectors: vec!["velocity".into()],
        ..ModelConfig::default()
    }
}

fn equivariance_opts(seed: u64) -> CheckOptions {
    CheckOptions {
        num_samples: 8,
        tolerance: 1e-8,
        include_reflection: true,
        include_translation: false,
        seed,
    }
}

#[test]
fn all_variants_are_equivariant() {
    let mut rng = seeded(500);
    let mut case = 0;
    for variant in [Variant::Segnn, Variant::SeNonlinear, Variant::SeLinear] {
        for (l_f, l_a) in [(1, 1), (2, 2), (1, 2), (2, 1), (0, 1)] {
            case += 1;
            let mut c = config(variant, l_f, l_a);
            // Vary the secondary options across cases.
            c.include_odd = case % 2 == 0;
            c.aggregation = if case % 3 == 0 { Aggregation::Sum } else { Aggregation::Mean };
            c.use_instance_norm = case % 4 == 1;
            c.hidden_mode = if case % 5 == 2 { LayoutMode::Balanced } else { LayoutMode::Copies };
            c.seed = case;
            let net = Network::new(&c).unwrap();
            let n = 5 + (case as usize * 7) % 16;
            let graph = random_graph(&mut rng, n, NeighborRule::Knn { k: 4 });
            let report = check_equivariance(&net, &graph, &equivariance_opts(case)).unwrap();
            assert_eq!(report.checks[0].max_abs_error, 0.0, "identity must be exact");
            assert!(
                report.passed,
                "{variant:?} l_f={l_f} l_a={l_a}: relative error {:e}",
                report.max_relative_error
            );
        }
    }
}

#[test]
fn graph_scalar_head_is_invariant_output() {
    let mut rng = seeded(501);
    let c = ModelConfig {
        head: HeadKind::GraphScalar,
        head_scalars: 8,
        ..config(Variant::Segnn, 2, 2)
    };
    let net = Network::new(&c).unwrap();
    let graph = random_graph(&mut rng, 9, NeighborRule::Complete);
    let report = check_equivariance(&net, &graph, &equivariance_opts(3)).unwrap();
    assert!(report.passed, "{:e}", report.max_relative_error);
}

#[test]
fn translations_leave_outputs_unchanged() {
    let mut rng = seeded(502);
    for variant in [Variant::Segnn, Variant::SeNonlinear, Variant::SeLinear] {
        let net = Network::new(&config(variant, 1, 1)).unwrap();
        let graph = random_graph(&mut rng, 12, NeighborRule::Complete);
        let opts = CheckOptions {
            tolerance: 1e-9,
            include_translation: true,
            ..equivariance_opts(4)
        };
        let report = check_equivariance(&net, &graph, &opts).unwrap();
        assert!(report.passed, "{variant:?}: {:e}", report.max_relative_error);
    }
}

#[test]
fn scalar_model_is_invariant() {
    let mut rng = seeded(503);
    let opts = CheckOptions {
        tolerance: 1e-12,
        include_translation: true,
        ..equivariance_opts(5)
    };
    for variant in [Variant::Segnn, Variant::SeNonlinear, Variant::SeLinear] {
        let net = Network::new(&config(variant, 0, 0)).unwrap();
        let graph = random_graph(&mut rng, 8, NeighborRule::Complete);
        let report = check_invariance(&net, &graph, &opts).unwrap();
        assert!(report.passed, "{variant:?}: {:e}", report.max_abs_error);
    }
}

#[test]
fn covariant_model_fails_invariance() {
    let mut rng = seeded(504);
    let net = Network::new(&config(Variant::Segnn, 1, 1)).unwrap();
    let graph = random_graph(&mut rng, 8, NeighborRule::Complete);
    let opts = CheckOptions {
        tolerance: 1e-12,
        ..equivariance_opts(6)
    };
    let report = check_invariance(&net, &graph, &opts).unwrap();
    assert!(!report.passed);
    assert!(report.max_abs_error > 1e-3);
}

#[test]
fn relabelling_nodes_permutes_outputs() {
    let mut rng = seeded(505);
    for variant in [Variant::Segnn, Variant::SeLinear] {
        let net = Network::new(&config(variant, 1, 2)).unwrap();
        let graph = random_graph(&mut rng, 10, NeighborRule::Knn { k: 3 });
        let perm = [3, 7, 0, 9, 1, 2, 8, 5, 6, 4];
        assert!(permutation_error(&net, &graph, &perm).unwrap() < 1e-12);
    }
}

#[test]
fn injected_faults_are_detected() {
    let mut rng = seeded(506);
    let graph = random_graph(&mut rng, 6, NeighborRule::Complete);
    for fault in [Fault::IgnoreParity, Fault::FlipCgSign] {
        for variant in [Variant::Segnn, Variant::SeLinear] {
            let mut c = config(variant, 1, 1);
            c.fault = Some(fault);
            let net = Network::new(&c).unwrap();
            let report = check_equivariance(&net, &graph, &equivariance_opts(7)).unwrap();
            assert!(!report.passed, "{fault:?} on {variant:?} went unnoticed");
            assert!(report.max_relative_error > 1e-3);
        }
    }
}

fn two_layer_segnn() -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 8,
        ..config(Variant::Segnn, 1, 1)
    }
}

/// Every parameter tensor agrees with central differences to 1e-4. Single
/// coordinates can sit at the f64 resolution limit of a 1e-6 step (a weight
/// whose downstream Swish gate is nearly closed), so the per-coordinate
/// figure is only bounded here; the acceptance target reports it as is.
#[test]
fn network_gradients_match_finite_differences() {
    let mut rng = seeded(507);
    let net = Network::new(&two_layer_segnn()).unwrap();
    let params = net.num_parameters();
    assert!((500..=2000).contains(&params), "{params} parameters");
    let graph = random_graph(&mut rng, 5, NeighborRule::Complete);
    let report = check_gradients(&net, &graph, FD_EPS, 1e-4, 1).unwrap();
    assert_eq!(report.coordinates, params);
    assert!(report.max_tensor_relative_error < 1e-4, "{:?}", report.tensor_errors);
    assert!(report.max_relative_error < 1e-1, "{report:?}");
}

#[test]
fn corrupted_adjoint_is_detected() {
    let mut rng = seeded(508);
    let mut c = two_layer_segnn();
    c.fault = Some(Fault::CorruptAdjoint);
    let net = Network::new(&c).unwrap();
    let graph = random_graph(&mut rng, 5, NeighborRule::Complete);
    let report = check_gradients(&net, &graph, FD_EPS, 1e-4, 1).unwrap();
    assert!(!report.passed);
    assert!(report.max_tensor_relative_error > 1e-2, "{report:?}");
}
