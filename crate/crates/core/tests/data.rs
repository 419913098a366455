use std::collections::VecDeque;

use equidyn_core::data::{gen_graphs, gen_shapes, is_connected, mnist_from_idx, resize_half};
use equidyn_core::group::seeded_rng;
use equidyn_core::Error;
use proptest::prelude::*;
use rand::Rng;

/// Breadth-first search from node 0 over the nonzero entries.
fn bfs_connected(adj: &[f64], n: usize) -> bool {
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if adj[i * n + j] > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                adj[i * n + j] = 1.0;
                adj[j * n + i] = 1.0;
            }
        }
    }
    adj
}

#[test]
fn connectivity_matches_bfs_on_random_graphs() {
    let mut rng = seeded_rng(21);
    let mut connected = 0;
    for k in 0..500 {
        let n = 2 + k % 9;
        let p = rng.random_range(0.05..0.6);
        let adj = random_graph(n, p, &mut rng);
        let expected = bfs_connected(&adj, n);
        assert_eq!(is_connected(&adj, n).unwrap(), expected, "graph {k}");
        connected += usize::from(expected);
    }
    // both labels occur, so agreement is not vacuous
    assert!(connected > 50 && connected < 450, "{connected}");
}

#[test]
fn small_graphs_by_hand() {
    let mut path = vec![0.0; 16];
    for i in 0..3 {
        path[i * 4 + i + 1] = 1.0;
        path[(i + 1) * 4 + i] = 1.0;
    }
    assert!(is_connected(&path, 4).unwrap());
    let mut dyads = vec![0.0; 16];
    for (i, j) in [(0, 1), (2, 3)] {
        dyads[i * 4 + j] = 1.0;
        dyads[j * 4 + i] = 1.0;
    }
    assert!(!is_connected(&dyads, 4).unwrap());
}

#[test]
fn generated_graph_labels_match_bfs() {
    let ds = gen_graphs(1000, 10, 0.5, 0.05, 7).unwrap();
    let mut connected = 0;
    for r in 0..ds.len() {
        let label = ds.targets().row(r)[0] == 1.0;
        assert_eq!(label, bfs_connected(ds.inputs().row(r), 10));
        connected += usize::from(label);
    }
    assert!(connected > 0 && connected < 1000);
    assert_eq!(ds.meta.param("nodes"), Some("10"));
}

#[test]
fn extreme_edge_probabilities() {
    let full = gen_graphs(5, 6, 1.0, 1.0, 1).unwrap();
    let empty = gen_graphs(5, 6, 0.0, 0.0, 1).unwrap();
    for r in 0..5 {
        assert_eq!(full.targets().row(r)[0], 1.0);
        assert_eq!(full.inputs().row(r).iter().sum::<f64>(), 30.0);
        assert_eq!(empty.targets().row(r)[0], 0.0);
    }
    assert_eq!(
        gen_graphs(3, 6, 0.5, 0.05, 9).unwrap(),
        gen_graphs(3, 6, 0.5, 0.05, 9).unwrap()
    );
}

#[test]
fn resize_of_constant_and_checkerboard() {
    assert_eq!(resize_half(&[0.3; 16], 4).unwrap(), vec![0.3; 4]);
    let board: Vec<f64> = (0..36)
        .map(|p| f64::from(((p / 6 + p % 6) % 2) as u8))
        .collect();
    assert_eq!(resize_half(&board, 6).unwrap(), vec![0.5; 9]);
}

proptest! {
    #[test]
    fn resize_preserves_mean(half in 1usize..8, seed in any::<u64>()) {
        let side = 2 * half;
        let mut rng = seeded_rng(seed);
        let img: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
        let out = resize_half(&img, side).unwrap();
        let mean_in = img.iter().sum::<f64>() / img.len() as f64;
        let mean_out = out.iter().sum::<f64>() / out.len() as f64;
        prop_assert!((mean_in - mean_out).abs() <= 1e-12);
    }
}

#[test]
fn shape_masks_are_exclusive_and_inside_the_image() {
    let side = 14;
    let d = side * side;
    let ds = gen_shapes(200, side, 5).unwrap();
    for r in 0..ds.len() {
        let t = ds.targets().row(r);
        let nonzero: Vec<bool> = (0..2)
            .map(|c| t[c * d..(c + 1) * d].iter().any(|&v| v != 0.0))
            .collect();
        assert_eq!(nonzero.iter().filter(|&&b| b).count(), 1, "sample {r}");
        let x = ds.inputs().row(r);
        for c in 0..2 {
            for p in 0..d {
                if t[c * d + p] != 0.0 {
                    assert!(x[p] > 0.0);
                }
            }
        }
    }
    assert_eq!(
        gen_shapes(10, side, 5).unwrap(),
        gen_shapes(10, side, 5).unwrap()
    );
}

fn idx(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
    let mut v = magic.to_be_bytes().to_vec();
    for d in dims {
        v.extend_from_slice(&d.to_be_bytes());
    }
    v.extend_from_slice(body);
    v
}

#[test]
fn idx_faults_are_named() {
    let images = idx(0x0803, &[2, 2, 2], &[0, 255, 0, 255, 10, 20, 30, 40]);
    let labels = idx(0x0801, &[2], &[7, 2]);
    let ds = mnist_from_idx(&images, &labels).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.targets().row(0)[7], 1.0);
    assert_eq!(ds.inputs().row(0)[1], 1.0);

    let truncated = &images[..images.len() - 1];
    assert!(matches!(
        mnist_from_idx(truncated, &labels),
        Err(Error::CountMismatch { .. })
    ));
    let mut swapped = images.clone();
    swapped[..4].copy_from_slice(&0x0803u32.to_le_bytes());
    assert!(matches!(
        mnist_from_idx(&swapped, &labels),
        Err(Error::BadMagic { .. })
    ));
}

/// Reads the official test files when a data directory is configured.
#[test]
fn official_test_set_when_available() {
    let Some(dir) = std::env::var_os("EQUIDYN_DATA_DIR") else {
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    let (Ok(images), Ok(labels)) = (
        std::fs::read(dir.join("t10k-images-idx3-ubyte")),
        std::fs::read(dir.join("t10k-labels-idx1-ubyte")),
    ) else {
        return;
    };
    let ds = mnist_from_idx(&images, &labels).unwrap();
    assert_eq!(ds.len(), 10_000);
    assert_eq!(ds.targets().row(0)[7], 1.0);
}
