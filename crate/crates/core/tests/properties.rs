use geomotion::geodesic::{build_graph_in_box, dijkstra_adjacency, INFLUENCE_EPS};
use geomotion::io::{gen_toy_jc, load_checkpoint, save_checkpoint, DatasetFile, ToyJcConfig};
use geomotion::metric::{
    ambient_factor, curve_length, decoder_jacobians, pullback_metric_at, AmbientMetricSpec,
};
use geomotion::nets::{Mlp, RbfNet};
use geomotion::types::Obstacle;
use geomotion::vae::{Dims, ManifoldModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64, n: usize, m: usize, d: usize) -> ManifoldModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = n + m + 1;
    let enc_mean = Mlp::new(&[a, 12, d], &mut rng).unwrap();
    let enc_logstd = Mlp::new(&[a, 12, d], &mut rng).unwrap();
    let dec = Mlp::new(&[d, 16, 12, a], &mut rng).unwrap();
    let k = 8;
    let centers = DMatrix::from_fn(k, d, |_, _| rng.random_range(-2.0..2.0));
    let prec = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.0..5.0));
    let conc = DMatrix::from_fn(1, k, |_, _| rng.random_range(0.0..100.0));
    ManifoldModel::from_parts(
        Dims::new(n, m, d).unwrap(),
        enc_mean,
        enc_logstd,
        dec,
        RbfNet::new(centers.clone(), 0.7, prec, 1e-2).unwrap(),
        RbfNet::new(centers, 0.7, conc, 1e-2).unwrap(),
        1.0,
        1.0,
    )
    .unwrap()
}

fn central_jacobian(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
    let h = 1e-5;
    let cols: Vec<DVector<f64>> = (0..z.len())
        .map(|j| {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            (f(&zp) - f(&zm)) / (2.0 * h)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn close(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>, value_scale: f64) -> bool {
    let denom = analytic.norm().max(1e-3 * (1.0 + value_scale));
    (analytic - numeric).norm() / denom < 1e-5
}

fn latent(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.5..2.5f64, d)
}

fn bellman_ford(adj: &[Vec<(usize, f64)>], start: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[start] = 0.0;
    for _ in 0..adj.len() {
        for u in 0..adj.len() {
            for &(v, w) in &adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                }
            }
        }
    }
    dist
}

fn linear_grid(
    scale: f64,
    grid: usize,
    lo: [f64; 2],
    side: f64,
) -> geomotion::geodesic::GeodesicGraph {
    let model = ManifoldModel::linear(DMatrix::identity(2, 2) * scale, &[1.0, 0.0]).unwrap();
    build_graph_in_box(
        &model,
        grid,
        &DVector::from_row_slice(&lo),
        &DVector::from_vec(vec![lo[0] + side, lo[1] + side]),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlp_jacobian_matches_differences(seed in any::<u64>(), z in latent(3), hidden in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, hidden, 7, 4], &mut rng).unwrap();
        let z = DVector::from_vec(z);
        let (y, j) = net.forward_with_jacobian(&z).unwrap();
        let fd = central_jacobian(&|x| net.forward(x).unwrap(), &z);
        prop_assert!(close(&j, &fd, y.norm()));
    }

    #[test]
    fn rbf_jacobian_matches_differences(seed in any::<u64>(), z in latent(2)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-2.0..2.0));
        let w = DMatrix::from_fn(3, 6, |_, _| rng.random_range(0.0..10.0));
        let net = RbfNet::new(centers, rng.random_range(0.1..3.0), w, 1e-2).unwrap();
        let z = DVector::from_vec(z);
        let (y, j) = net.forward_with_jacobian(&z).unwrap();
        let fd = central_jacobian(&|x| net.forward(x).unwrap(), &z);
        prop_assert!(close(&j, &fd, y.norm()));
    }

    #[test]
    fn decoder_jacobians_match_differences(seed in any::<u64>(), z in latent(2)) {
        let model = random_model(seed, 3, 3, 2);
        let z = DVector::from_vec(z);
        let jac = decoder_jacobians(&model, &z).unwrap();
        let dec = |x: &DVector<f64>| model.decode_vector(x).unwrap();
        let d0 = dec(&z);
        prop_assert!(close(&jac.position, &central_jacobian(&|x| dec(x).position, &z), d0.position.norm()));
        prop_assert!(close(&jac.position_std, &central_jacobian(&|x| dec(x).position_std, &z), d0.position_std.norm()));
        prop_assert!(close(&jac.orientation, &central_jacobian(&|x| dec(x).orientation, &z), 1.0));
        prop_assert!(close(
            &jac.concentration,
            &central_jacobian(&|x| DVector::from_element(1, dec(x).concentration), &z),
            d0.concentration,
        ));
    }

    #[test]
    fn pullback_metric_is_symmetric_positive_definite(seed in any::<u64>(), z in latent(2)) {
        let model = random_model(seed, 3, 3, 2);
        let m = pullback_metric_at(&model, &DVector::from_vec(z), &AmbientMetricSpec::default()).unwrap();
        let mat = m.matrix();
        prop_assert!((mat - mat.transpose()).norm() <= 1e-12 * mat.norm());
        prop_assert!(m.min_eigenvalue() > 0.0);
    }

    #[test]
    fn dijkstra_agrees_with_bellman_ford(
        seed in any::<u64>(),
        nodes in 2usize..40,
        density in 0.05..0.5f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = vec![Vec::new(); nodes];
        for u in 0..nodes {
            for v in 0..nodes {
                if u != v && rng.random_bool(density) {
                    // dyadic weights keep every sum exact
                    adj[u].push((v, rng.random_range(0..64u32) as f64 / 8.0));
                }
            }
        }
        let dist = bellman_ford(&adj, 0);
        for goal in 0..nodes {
            match dijkstra_adjacency(&adj, 0, goal) {
                Ok((path, cost)) => {
                    prop_assert_eq!(cost, dist[goal]);
                    prop_assert_eq!(path[0], 0);
                    prop_assert_eq!(*path.last().unwrap(), goal);
                    let walked: f64 = path
                        .windows(2)
                        .map(|w| adj[w[0]].iter().filter(|e| e.0 == w[1]).map(|e| e.1).fold(f64::INFINITY, f64::min))
                        .sum();
                    prop_assert_eq!(walked, cost);
                }
                Err(_) => prop_assert!(dist[goal].is_infinite()),
            }
        }
    }

    #[test]
    fn flat_grid_costs_are_octile_distances(
        scale in 0.1..5.0f64,
        grid in 3usize..25,
        lo in prop::array::uniform2(-3.0..3.0f64),
        side in 0.5..4.0f64,
        pairs in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 5),
    ) {
        let graph = linear_grid(scale, grid, lo, side);
        let h = side / (grid - 1) as f64;
        for (a, b) in pairs {
            let (a, b) = (a.index(graph.node_count()), b.index(graph.node_count()));
            let cost = graph.shortest_path_nodes(a, b).unwrap().cost;
            let (da, db) = (&graph.node(a).coords, &graph.node(b).coords);
            let di = ((da[0] - db[0]).abs() / h).round();
            let dj = ((da[1] - db[1]).abs() / h).round();
            let octile = scale * h * (di.max(dj) + (2f64.sqrt() - 1.0) * di.min(dj));
            prop_assert!((cost - octile).abs() <= 1e-9 * (1.0 + octile));
            let euclid = scale * (da - db).norm();
            prop_assert!(cost <= euclid * (4.0 - 2.0 * 2f64.sqrt()).sqrt() + 1e-9);
        }
    }

    #[test]
    fn split_reweighting_matches_full_recomputation(
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..3),
        radius in 0.05..0.5f64,
        strength in 1.0..100.0f64,
    ) {
        let model = random_model(seed, 3, 3, 2);
        let lo = DVector::from_vec(vec![-2.0, -2.0]);
        let hi = DVector::from_vec(vec![2.0, 2.0]);
        let mut graph = build_graph_in_box(&model, 12, &lo, &hi).unwrap();
        let obstacles: Vec<Obstacle> = picks
            .iter()
            .map(|i| {
                let node = graph.node(i.index(graph.node_count()));
                Obstacle::new(node.position.as_slice().to_vec(), radius, strength).unwrap()
            })
            .collect();
        graph.apply_obstacles(&obstacles).unwrap();
        for edge in graph.edges() {
            let (na, nb) = (graph.node(edge.a), graph.node(edge.b));
            let dz = &nb.coords - &na.coords;
            let la = ambient_factor(na.position.as_slice(), &obstacles);
            let lb = ambient_factor(nb.position.as_slice(), &obstacles);
            let ma = &na.metric_position * la + &na.metric_orientation;
            let mb = &nb.metric_position * lb + &nb.metric_orientation;
            let full = (0.5 * (dz.dot(&(&ma * &dz)) + dz.dot(&(&mb * &dz)))).sqrt();
            let rel = (edge.weight - full).abs() / full;
            if la.max(lb) > 1.0 + INFLUENCE_EPS {
                prop_assert!(rel <= 1e-12, "influenced edge off by {rel}");
            } else {
                prop_assert!(rel <= (1.0 + INFLUENCE_EPS).sqrt() - 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn obstacles_never_shorten_anything(
        seed in any::<u64>(),
        pick in any::<prop::sample::Index>(),
        pair in (any::<prop::sample::Index>(), any::<prop::sample::Index>()),
        strength in 0.5..100.0f64,
    ) {
        let model = random_model(seed, 3, 3, 2);
        let lo = DVector::from_vec(vec![-2.0, -2.0]);
        let hi = DVector::from_vec(vec![2.0, 2.0]);
        let mut graph = build_graph_in_box(&model, 10, &lo, &hi).unwrap();
        let (a, b) = (pair.0.index(graph.node_count()), pair.1.index(graph.node_count()));
        let before_edges: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();
        let before = graph.shortest_path_nodes(a, b).unwrap().cost;
        let center = graph.node(pick.index(graph.node_count())).position.as_slice().to_vec();
        let one = Obstacle::new(center.clone(), 0.2, strength).unwrap();
        graph.apply_obstacles(std::slice::from_ref(&one)).unwrap();
        let with_one = graph.shortest_path_nodes(a, b).unwrap().cost;
        let one_edges: Vec<f64> = graph.edges().iter().map(|e| e.weight).collect();
        let mut shifted = center;
        shifted[0] += 0.1;
        graph.apply_obstacles(&[one, Obstacle::new(shifted, 0.2, strength).unwrap()]).unwrap();
        let with_two = graph.shortest_path_nodes(a, b).unwrap().cost;
        prop_assert!(with_one >= before && with_two >= with_one);
        for (k, e) in graph.edges().iter().enumerate() {
            prop_assert!(one_edges[k] >= before_edges[k] && e.weight >= one_edges[k]);
        }
    }

    #[test]
    fn curve_length_is_additive_and_reversible(
        seed in any::<u64>(),
        points in prop::collection::vec(latent(2), 3..12),
        split in any::<prop::sample::Index>(),
    ) {
        let model = random_model(seed, 3, 3, 2);
        let ambient = AmbientMetricSpec::default();
        let curve: Vec<DVector<f64>> = points.into_iter().map(DVector::from_vec).collect();
        let k = 1 + split.index(curve.len() - 2);
        let whole = curve_length(&model, &curve, &ambient).unwrap();
        let parts = curve_length(&model, &curve[..=k], &ambient).unwrap()
            + curve_length(&model, &curve[k..], &ambient).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-10 * whole);
        let mut reversed = curve.clone();
        reversed.reverse();
        let back = curve_length(&model, &reversed, &ambient).unwrap();
        prop_assert!((whole - back).abs() <= 1e-10 * whole);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoints_round_trip_byte_identically(seed in any::<u64>()) {
        let mut model = random_model(seed, 2, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        model = model
            .with_latent_support(DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0)))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        save_checkpoint(&model, &a).unwrap();
        let back = load_checkpoint(&a).unwrap();
        save_checkpoint(&back, &b).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn datasets_round_trip_byte_identically(seed in any::<u64>(), samples in 10usize..40) {
        let data = gen_toy_jc(&ToyJcConfig { samples, demonstrations: 2, noise: 0.05, seed }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        data.save(&a).unwrap();
        let back = DatasetFile::load(&a).unwrap();
        back.save(&b).unwrap();
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
