//! The fixed evaluation corpus: twenty scenes, each paired with one edit
//! instruction.

use serde::{Deserialize, Serialize};

use super::palette::ColorWord::{self, *};
use super::scene::{Background, Motion, ObjectSpec, SceneSpec, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub spec: SceneSpec,
    pub instruction: String,
}

fn lin(shape: Shape, color: ColorWord, size: f32, start: [f32; 2], velocity: [f32; 2]) -> ObjectSpec {
    ObjectSpec {
        shape,
        color,
        size,
        motion: Motion::Linear { start, velocity },
    }
}

fn circ(shape: Shape, color: ColorWord, size: f32, center: [f32; 2], radius: f32, angular: f32, phase: f32) -> ObjectSpec {
    ObjectSpec {
        shape,
        color,
        size,
        motion: Motion::Circular {
            center,
            radius,
            angular,
            phase,
        },
    }
}

fn scene(seed: u64, background: Background, pan: [f32; 2], objects: Vec<ObjectSpec>) -> SceneSpec {
    SceneSpec {
        seed,
        background,
        objects,
        frames: 8,
        height: 64,
        width: 64,
        pan,
    }
}

/// The default twenty-scene corpus at 64x64, 8 frames.
pub fn default_corpus() -> Vec<CorpusEntry> {
    use Background::*;
    use Shape::*;
    let still = [0.0, 0.0];
    let rows: Vec<(SceneSpec, &str)> = vec![
        (
            scene(101, Noise, still, vec![lin(Square, Blue, 8.0, [18.0, 32.0], [1.5, 0.0])]),
            "add a red ball beside the blue square",
        ),
        (
            scene(102, Striped, still, vec![lin(Disk, Green, 7.0, [44.0, 20.0], [-1.5, 1.0])]),
            "add a yellow box near the green disk",
        ),
        (
            scene(103, Checkered, [1.0, 0.0], vec![lin(Triangle, Magenta, 11.0, [32.0, 40.0], still)]),
            "add a cyan ball above the magenta triangle",
        ),
        (
            scene(
                104,
                Gradient,
                still,
                vec![
                    lin(Disk, Orange, 6.0, [12.0, 12.0], [1.5, 1.5]),
                    lin(Square, White, 7.0, [48.0, 48.0], [-1.0, -0.5]),
                ],
            ),
            "add a blue triangle near the white square",
        ),
        (
            scene(105, Plain, still, vec![circ(Square, Cyan, 11.0, [32.0, 32.0], 12.0, 0.3, 0.0)]),
            "add a red disk behind the cyan square",
        ),
        (
            scene(106, Noise, [0.0, 1.0], vec![lin(Triangle, Yellow, 7.0, [20.0, 44.0], [1.0, -1.0])]),
            "add a magenta ball below the yellow triangle",
        ),
        (
            scene(
                107,
                Striped,
                still,
                vec![
                    lin(Square, Blue, 10.0, [36.0, 32.0], still),
                    lin(Disk, Green, 6.0, [16.0, 32.0], [2.0, 0.0]),
                ],
            ),
            "add a red triangle above the blue square",
        ),
        (
            scene(108, Checkered, still, vec![circ(Disk, Red, 7.0, [32.0, 32.0], 14.0, 0.35, 1.0)]),
            "add a white box near the red disk",
        ),
        (
            scene(109, Gradient, [1.0, 0.0], vec![lin(Square, Green, 8.0, [50.0, 20.0], [-2.0, 1.0])]),
            "add an orange ball below the green square",
        ),
        (
            scene(
                110,
                Noise,
                still,
                vec![
                    lin(Disk, Magenta, 8.0, [32.0, 16.0], [0.0, 2.0]),
                    lin(Triangle, Cyan, 6.0, [12.0, 50.0], still),
                ],
            ),
            "add a yellow square beside the magenta disk",
        ),
        (
            scene(111, Plain, [-1.0, 0.0], vec![lin(Triangle, Orange, 9.0, [40.0, 36.0], [-1.0, 0.0])]),
            "add a green disk near the orange triangle",
        ),
        (
            scene(
                112,
                Striped,
                still,
                vec![
                    lin(Disk, Yellow, 6.0, [50.0, 50.0], [-2.0, -2.0]),
                    lin(Triangle, Blue, 8.0, [20.0, 20.0], [0.5, 1.0]),
                ],
            ),
            "add a red box behind the yellow disk",
        ),
        (
            scene(
                113,
                Checkered,
                still,
                vec![
                    lin(Triangle, White, 12.0, [16.0, 16.0], [1.0, 1.0]),
                    lin(Square, Magenta, 7.0, [48.0, 16.0], [-1.0, 1.0]),
                ],
            ),
            "add a green ball below the white triangle",
        ),
        (
            scene(
                114,
                Noise,
                [1.0, 0.0],
                vec![
                    lin(Square, Red, 10.0, [32.0, 36.0], still),
                    lin(Disk, Cyan, 6.0, [32.0, 10.0], [0.0, 2.0]),
                ],
            ),
            "add a yellow triangle beside the red square",
        ),
        (
            scene(115, Gradient, still, vec![lin(Disk, Blue, 9.0, [20.0, 40.0], [1.5, -1.0])]),
            "add a white ball above the blue disk",
        ),
        (
            scene(116, Plain, still, vec![circ(Triangle, Green, 10.0, [32.0, 34.0], 10.0, -0.3, 0.5)]),
            "add a magenta box near the green triangle",
        ),
        (
            scene(
                117,
                Striped,
                [0.0, -1.0],
                vec![
                    lin(Disk, Cyan, 7.0, [14.0, 20.0], [2.0, 1.0]),
                    lin(Square, Orange, 6.0, [50.0, 46.0], still),
                ],
            ),
            "add a blue ball beside the orange square",
        ),
        (
            scene(
                118,
                Noise,
                still,
                vec![
                    lin(Square, Yellow, 8.0, [44.0, 44.0], [-1.0, -1.0]),
                    lin(Disk, Red, 6.0, [16.0, 48.0], [1.0, -1.5]),
                ],
            ),
            "add a cyan triangle above the yellow square",
        ),
        (
            scene(119, Checkered, [1.0, 0.0], vec![lin(Disk, Magenta, 10.0, [30.0, 32.0], [0.5, 0.0])]),
            "add an orange box beside the magenta disk",
        ),
        (
            scene(
                120,
                Gradient,
                still,
                vec![
                    lin(Square, White, 6.0, [10.0, 10.0], [2.0, 2.0]),
                    lin(Disk, Green, 8.0, [44.0, 24.0], [0.0, 1.5]),
                ],
            ),
            "add a red triangle below the green disk",
        ),
    ];
    rows.into_iter()
        .enumerate()
        .map(|(i, (spec, instr))| CorpusEntry {
            name: format!("scene_{:02}", i + 1),
            spec,
            instruction: instr.to_string(),
        })
        .collect()
}
