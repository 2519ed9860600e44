use std::collections::VecDeque;

use lidar_edge::classical::{canny, non_maximum_suppression, roberts, sobel, threshold_magnitude, CannyParams};
use lidar_edge::imaging::gaussian_filter;
use lidar_edge::lidar::{range_to_intensity, render_scene, LidarConfig, Primitive, Scene};
use lidar_edge::{EdgeMap, GrayImage};
use proptest::prelude::*;

const CANVAS: usize = 32;
const PATCH: usize = 8;

/// Random content on a zero canvas, placed with its corner at `(top, left)`.
fn placed(content: &[f64], top: usize, left: usize) -> GrayImage {
    GrayImage::from_fn(CANVAS, CANVAS, |r, c| {
        if (top..top + PATCH).contains(&r) && (left..left + PATCH).contains(&c) {
            content[(r - top) * PATCH + (c - left)]
        } else {
            0.0
        }
    })
}

fn shifted(map: &EdgeMap, dy: isize, dx: isize) -> EdgeMap {
    EdgeMap::from_fn(CANVAS, CANVAS, |r, c| {
        let (sr, sc) = (r as isize - dy, c as isize - dx);
        (0..CANVAS as isize).contains(&sr) && (0..CANVAS as isize).contains(&sc) && map.is_edge(sr as usize, sc as usize)
    })
}

fn params() -> impl Strategy<Value = CannyParams> {
    (0.5..1.5f64, 0.05..0.4f64, 0.1..0.9f64).prop_map(|(sigma, high, ratio)| CannyParams { sigma, low: high * ratio, high })
}

fn step_intensity(boundary: usize, near: f64, gap: f64) -> GrayImage {
    let cfg = LidarConfig { height: 20, width: 20, noise_sigma: 0.0, dropout_prob: 0.0, ..Default::default() };
    let scene = Scene { primitives: vec![Primitive::left_of(boundary as f64, near)], background_range: near + gap };
    range_to_intensity(&render_scene(&scene, &cfg, 0.5, 1).unwrap().0)
}

proptest! {
    #[test]
    fn detectors_are_translation_equivariant(
        content in prop::collection::vec(0.0..1.0f64, PATCH * PATCH),
        dy in -3isize..=3,
        dx in -3isize..=3,
        t in 0.05..0.95f64,
        p in params(),
    ) {
        let base = placed(&content, 12, 12);
        let moved = placed(&content, (12 + dy) as usize, (12 + dx) as usize);
        let a = threshold_magnitude(&sobel(&base).unwrap(), t).unwrap();
        let b = threshold_magnitude(&sobel(&moved).unwrap(), t).unwrap();
        prop_assert_eq!(shifted(&a, dy, dx), b);
        let a = threshold_magnitude(&roberts(&base).unwrap(), t).unwrap();
        let b = threshold_magnitude(&roberts(&moved).unwrap(), t).unwrap();
        prop_assert_eq!(shifted(&a, dy, dx), b);
        prop_assert_eq!(shifted(&canny(&base, p).unwrap(), dy, dx), canny(&moved, p).unwrap());
    }

    #[test]
    fn gradients_ignore_offsets_and_scale_with_contrast(
        data in prop::collection::vec(0.0..1.0f64, 49),
        k in 0.1..4.0f64,
        offset in -1.0..1.0f64,
    ) {
        let img = GrayImage::new(7, 7, data).unwrap();
        for (op, zero_fringe) in [(sobel as fn(&GrayImage) -> _, false), (roberts, true)] {
            let base = op(&img).unwrap();
            let off = op(&img.map(|v| v + offset)).unwrap();
            let scaled = op(&img.map(|v| k * v)).unwrap();
            for i in 0..49 {
                // Roberts zero-pads its bottom/right fringe, where an offset is visible.
                let fringe = i / 7 == 6 || i % 7 == 6;
                if !(fringe && zero_fringe) {
                    prop_assert!((base.magnitude[i] - off.magnitude[i]).abs() <= 1e-12);
                }
                prop_assert!((k * base.magnitude[i] - scaled.magnitude[i]).abs() <= 1e-12 * k.max(1.0));
            }
        }
    }

    #[test]
    fn clean_step_edges_survive_linear_rescaling(boundary in 4usize..16, near in 3.0..20.0f64, gap in 2.0..20.0f64, t in 0.05..0.95f64, p in params()) {
        let img = step_intensity(boundary, near, gap);
        let rescaled = img.map(|v| 0.5 * v + 0.1);
        prop_assert_eq!(canny(&img, p).unwrap(), canny(&rescaled, p).unwrap());
        prop_assert_eq!(
            threshold_magnitude(&sobel(&img).unwrap(), t).unwrap(),
            threshold_magnitude(&sobel(&rescaled).unwrap(), t).unwrap()
        );
    }

    #[test]
    fn canny_output_is_thin_and_connected(data in prop::collection::vec(0.0..1.0f64, 144), p in params()) {
        let img = GrayImage::new(12, 12, data).unwrap();
        let edges = canny(&img, p).unwrap();
        let g = sobel(&gaussian_filter(&img, p.sigma).unwrap()).unwrap();
        let thin = non_maximum_suppression(&g);
        let strong_cut = p.high * g.max_magnitude();
        let mut reached = [false; 144];
        let mut queue = VecDeque::new();
        for i in 0..144 {
            if edges.data()[i] == 1 {
                prop_assert!(thin[i] > 0.0, "pixel {} is not an NMS survivor", i);
                if thin[i] >= strong_cut {
                    reached[i] = true;
                    queue.push_back(i);
                }
            }
        }
        while let Some(i) = queue.pop_front() {
            let (r, c) = ((i / 12) as isize, (i % 12) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if (0..12).contains(&nr) && (0..12).contains(&nc) {
                        let j = (nr * 12 + nc) as usize;
                        if edges.data()[j] == 1 && !reached[j] {
                            reached[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        for i in 0..144 {
            prop_assert_eq!(reached[i], edges.data()[i] == 1, "weak pixel {} is not connected to a strong one", i);
        }
    }
}
