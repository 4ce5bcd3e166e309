//! Entity-tracking scenario generator and BoxWorld simulator.
//!
//! Scenarios have 7 boxes with at most 3 objects each; operations move,
//! remove, and add objects. A data point is characterized by the total
//! number of operations and by how many of them concern the queried box,
//! and the dataset is balanced over that grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{TaskInstance, TaskKind};
use crate::rng::{derive, seeded, LabRng};

pub const NUM_BOXES: usize = 7;
pub const MAX_BOX_SIZE: usize = 3;

/// Object vocabulary: the Appendix nouns plus fillers, 20 in total.
pub const OBJECT_NOUNS: [&str; 20] = [
    "key", "plant", "dish", "block", "shell", "brick", "flower", "string", "card", "cash",
    "guitar", "wire", "mirror", "apple", "book", "candle", "coin", "lamp", "map", "stone",
];

/// Number of (total_ops, target_ops) grid cells for the default ranges.
/// total in {2,4,...,30}, target in {0,2,...,min(total,24)}.
pub const ENTITY_GRID_CELLS: usize = 129;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntityOp {
    Put { obj: String, dst: usize },
    Remove { obj: String, src: usize },
    Move { obj: String, src: usize, dst: usize },
}

impl EntityOp {
    pub fn concerns(&self, b: usize) -> bool {
        match self {
            EntityOp::Put { dst, .. } => *dst == b,
            EntityOp::Remove { src, .. } => *src == b,
            EntityOp::Move { src, dst, .. } => *src == b || *dst == b,
        }
    }

    pub fn render(&self) -> String {
        match self {
            EntityOp::Put { obj, dst } => format!("Put the {obj} into Box {dst}."),
            EntityOp::Remove { obj, src } => format!("Remove the {obj} from Box {src}."),
            EntityOp::Move { obj, src, dst } => {
                format!("Move the {obj} from Box {src} to Box {dst}.")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxWorld {
    pub boxes: Vec<Vec<String>>,
    pub ops: Vec<EntityOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
}

impl BoxWorld {
    pub fn new(boxes: Vec<Vec<String>>) -> BoxWorld {
        BoxWorld { boxes, ops: Vec::new() }
    }

    /// Apply all recorded ops and return the resulting box contents.
    pub fn simulate(&self) -> Result<Vec<Vec<String>>, WorldError> {
        let mut boxes = self.boxes.clone();
        for op in &self.ops {
            match op {
                EntityOp::Put { obj, dst } => {
                    boxes
                        .get_mut(*dst)
                        .ok_or_else(|| WorldError::Malformed(format!("no box {dst}")))?
                        .push(obj.clone());
                }
                EntityOp::Remove { obj, src } => {
                    take_obj(&mut boxes, *src, obj)?;
                }
                EntityOp::Move { obj, src, dst } => {
                    take_obj(&mut boxes, *src, obj)?;
                    boxes
                        .get_mut(*dst)
                        .ok_or_else(|| WorldError::Malformed(format!("no box {dst}")))?
                        .push(obj.clone());
                }
            }
        }
        Ok(boxes)
    }

    /// Render the initial description sentence.
    pub fn render_description(&self) -> String {
        let clauses: Vec<String> = self
            .boxes
            .iter()
            .enumerate()
            .map(|(i, contents)| format!("Box {i} contains {}", render_contents(contents)))
            .collect();
        clauses.join(", ")
    }

    /// Render the full scenario text with the query for box `q`.
    pub fn render_scenario(&self, q: usize) -> String {
        let mut s = self.render_description();
        s.push('.');
        for op in &self.ops {
            s.push(' ');
            s.push_str(&op.render());
        }
        s.push_str(&format!(" What does Box {q} contain?"));
        s
    }
}

fn take_obj(boxes: &mut [Vec<String>], src: usize, obj: &str) -> Result<(), WorldError> {
    let b = boxes
        .get_mut(src)
        .ok_or_else(|| WorldError::Malformed(format!("no box {src}")))?;
    match b.iter().position(|o| o == obj) {
        Some(i) => {
            b.remove(i);
            Ok(())
        }
        None => Err(WorldError::Malformed(format!("{obj} not in box {src}"))),
    }
}

pub fn render_contents(contents: &[String]) -> String {
    if contents.is_empty() {
        "nothing".to_string()
    } else {
        contents
            .iter()
            .map(|o| format!("the {o}"))
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

/// Parse a rendered scenario back into a world plus the queried box.
pub fn parse_scenario(text: &str) -> Result<(BoxWorld, usize), WorldError> {
    let units = crate::textcodec::tokenize(text);
    let mut segments: Vec<Vec<&str>> = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for u in &units {
        if u == "." || u == "?" || u == "!" {
            if !cur.is_empty() {
                segments.push(core::mem::take(&mut cur));
            }
        } else {
            cur.push(u.as_str());
        }
    }
    if !cur.is_empty() {
        segments.push(cur);
    }

    let mut boxes: Option<Vec<Vec<String>>> = None;
    let mut ops: Vec<EntityOp> = Vec::new();
    let mut query: Option<usize> = None;

    for seg in &segments {
        if seg.is_empty() {
            continue;
        }
        if eq_ci(seg[0], "what") {
            // What does Box N contain
            let (n, _) = read_box_ref(&seg[2..])
                .ok_or_else(|| WorldError::Malformed("bad query".into()))?;
            query = Some(n);
        } else if eq_ci(seg[0], "box") {
            boxes = Some(parse_description(seg)?);
        } else if eq_ci(seg[0], "remove") {
            let (obj, rest) = read_the_obj(&seg[1..])?;
            expect_word(rest, 0, "from")?;
            let (src, _) = read_box_ref(&rest[1..])
                .ok_or_else(|| WorldError::Malformed("bad remove".into()))?;
            ops.push(EntityOp::Remove { obj, src });
        } else if eq_ci(seg[0], "put") {
            let (obj, rest) = read_the_obj(&seg[1..])?;
            expect_word(rest, 0, "into")?;
            let (dst, _) = read_box_ref(&rest[1..])
                .ok_or_else(|| WorldError::Malformed("bad put".into()))?;
            ops.push(EntityOp::Put { obj, dst });
        } else if eq_ci(seg[0], "move") {
            let (obj, rest) = read_the_obj(&seg[1..])?;
            expect_word(rest, 0, "from")?;
            let (src, rest) = read_box_ref(&rest[1..])
                .ok_or_else(|| WorldError::Malformed("bad move src".into()))?;
            expect_word(rest, 0, "to")?;
            let (dst, _) = read_box_ref(&rest[1..])
                .ok_or_else(|| WorldError::Malformed("bad move dst".into()))?;
            ops.push(EntityOp::Move { obj, src, dst });
        } else {
            return Err(WorldError::Malformed(format!("unknown sentence `{}`", seg.join(" "))));
        }
    }

    let boxes = boxes.ok_or_else(|| WorldError::Malformed("missing description".into()))?;
    let query = query.ok_or_else(|| WorldError::Malformed("missing query".into()))?;
    if query >= boxes.len() {
        return Err(WorldError::Malformed(format!("query box {query} out of range")));
    }
    let mut world = BoxWorld::new(boxes);
    world.ops = ops;
    Ok((world, query))
}

fn eq_ci(a: &str, b: &str) -> bool {
    a.eq_ignore_ascii_case(b)
}

fn expect_word(seg: &[&str], i: usize, w: &str) -> Result<(), WorldError> {
    if seg.get(i).map(|s| eq_ci(s, w)).unwrap_or(false) {
        Ok(())
    } else {
        Err(WorldError::Malformed(format!("expected `{w}`")))
    }
}

/// Read `Box <digits>`; returns the number and the remaining units.
fn read_box_ref<'a>(seg: &'a [&'a str]) -> Option<(usize, &'a [&'a str])> {
    if !seg.first().map(|s| eq_ci(s, "box")).unwrap_or(false) {
        return None;
    }
    let (n, used) = read_number(&seg[1..])?;
    Some((n, &seg[1 + used..]))
}

fn read_the_obj<'a>(seg: &'a [&'a str]) -> Result<(String, &'a [&'a str]), WorldError> {
    expect_word(seg, 0, "the")?;
    let obj = seg
        .get(1)
        .ok_or_else(|| WorldError::Malformed("missing object".into()))?;
    Ok(((*obj).to_string(), &seg[2..]))
}

fn parse_description(seg: &[&str]) -> Result<Vec<Vec<String>>, WorldError> {
    // Clauses: Box <n> contains <contents> [, Box <n> contains <contents>]*
    let mut boxes: Vec<Vec<String>> = Vec::new();
    let mut i = 0;
    while i < seg.len() {
        expect_word(seg, i, "box")?;
        let (n, used) = read_number(&seg[i + 1..])
            .ok_or_else(|| WorldError::Malformed("bad box number".into()))?;
        i += 1 + used;
        expect_word(seg, i, "contains")?;
        i += 1;
        let mut contents: Vec<String> = Vec::new();
        if seg.get(i).map(|s| eq_ci(s, "nothing")).unwrap_or(false) {
            i += 1;
        } else {
            loop {
                expect_word(seg, i, "the")?;
                let obj = seg
                    .get(i + 1)
                    .ok_or_else(|| WorldError::Malformed("missing object".into()))?;
                contents.push((*obj).to_string());
                i += 2;
                if seg.get(i).map(|s| eq_ci(s, "and")).unwrap_or(false) {
                    i += 1;
                } else {
                    break;
                }
            }
        }
        if n != boxes.len() {
            return Err(WorldError::Malformed(format!("box {n} out of order")));
        }
        boxes.push(contents);
        if seg.get(i).map(|s| *s == ",").unwrap_or(false) {
            i += 1;
        }
    }
    Ok(boxes)
}

fn read_number(seg: &[&str]) -> Option<(usize, usize)> {
    let mut used = 0;
    let mut n: usize = 0;
    while let Some(u) = seg.get(used) {
        if u.len() == 1 && u.chars().next().unwrap().is_ascii_digit() {
            n = n * 10 + u.parse::<usize>().ok()?;
            used += 1;
        } else {
            break;
        }
    }
    if used == 0 {
        None
    } else {
        Some((n, used))
    }
}

fn sample_initial_boxes(rng: &mut LabRng) -> Vec<Vec<String>> {
    // sizes 0..=3 with probabilities .1/.2/.3/.4: expected size 2, max 3
    (0..NUM_BOXES)
        .map(|_| {
            let r: f64 = rng.random();
            let size = if r < 0.1 {
                0
            } else if r < 0.3 {
                1
            } else if r < 0.6 {
                2
            } else {
                3
            };
            let mut pool: Vec<&str> = OBJECT_NOUNS.to_vec();
            pool.shuffle(rng);
            pool[..size].iter().map(|s| s.to_string()).collect()
        })
        .collect()
}

/// Pick one valid op; `concern` selects whether it must touch box `q`.
fn sample_op(rng: &mut LabRng, boxes: &[Vec<String>], q: usize, concern: bool) -> EntityOp {
    let mut options: Vec<EntityOp> = Vec::new();
    // Put
    for dst in 0..NUM_BOXES {
        if concern != (dst == q) {
            continue;
        }
        if boxes[dst].len() < MAX_BOX_SIZE {
            if let Some(obj) = pick_noun_not_in(rng, &boxes[dst]) {
                options.push(EntityOp::Put { obj, dst });
            }
        }
    }
    // Remove
    for src in 0..NUM_BOXES {
        if concern != (src == q) {
            continue;
        }
        if let Some(obj) = pick_from(rng, &boxes[src]) {
            options.push(EntityOp::Remove { obj, src });
        }
    }
    // Move
    for src in 0..NUM_BOXES {
        for dst in 0..NUM_BOXES {
            if src == dst {
                continue;
            }
            let touches_q = src == q || dst == q;
            if concern != touches_q {
                continue;
            }
            if boxes[dst].len() >= MAX_BOX_SIZE {
                continue;
            }
            let movable: Vec<&String> = boxes[src]
                .iter()
                .filter(|o| !boxes[dst].contains(o))
                .collect();
            if let Some(obj) = movable.as_slice().choose(rng) {
                options.push(EntityOp::Move {
                    obj: (*obj).clone(),
                    src,
                    dst,
                });
            }
        }
    }
    options
        .choose(rng)
        .cloned()
        .expect("at least one valid op always exists")
}

fn pick_noun_not_in(rng: &mut LabRng, existing: &[String]) -> Option<String> {
    let pool: Vec<&str> = OBJECT_NOUNS
        .iter()
        .copied()
        .filter(|n| !existing.iter().any(|e| e == n))
        .collect();
    pool.choose(rng).map(|s| s.to_string())
}

fn pick_from(rng: &mut LabRng, b: &[String]) -> Option<String> {
    b.choose(rng).cloned()
}

fn apply_op(boxes: &mut [Vec<String>], op: &EntityOp) {
    match op {
        EntityOp::Put { obj, dst } => boxes[*dst].push(obj.clone()),
        EntityOp::Remove { obj, src } => {
            let i = boxes[*src].iter().position(|o| o == obj).unwrap();
            boxes[*src].remove(i);
        }
        EntityOp::Move { obj, src, dst } => {
            let i = boxes[*src].iter().position(|o| o == obj).unwrap();
            boxes[*src].remove(i);
            boxes[*dst].push(obj.clone());
        }
    }
}

fn gen_scenario(rng: &mut LabRng, total_ops: u32, target_ops: u32) -> (BoxWorld, usize) {
    let q = rng.random_range(0..NUM_BOXES);
    let initial = sample_initial_boxes(rng);
    let mut schedule: Vec<bool> = (0..total_ops).map(|i| i < target_ops).collect();
    schedule.shuffle(rng);
    let mut boxes = initial.clone();
    let mut ops = Vec::with_capacity(total_ops as usize);
    for concern in schedule {
        let op = sample_op(rng, &boxes, q, concern);
        apply_op(&mut boxes, &op);
        ops.push(op);
    }
    let mut world = BoxWorld::new(initial);
    world.ops = ops;
    (world, q)
}

/// `per_cell` instances for every (total_ops, target_ops) grid cell.
pub fn gen_entity_tracking(seed: u64, per_cell: usize) -> Vec<TaskInstance> {
    assert!(per_cell >= 1);
    let mut rng = seeded(derive(seed, "gen-entity"));
    let mut out = Vec::new();
    for total in (2..=30u32).step_by(2) {
        for target in (0..=total.min(24)).step_by(2) {
            for _ in 0..per_cell {
                let (world, q) = gen_scenario(&mut rng, total, target);
                let final_boxes = world.simulate().expect("generated ops are valid");
                let mut difficulty = BTreeMap::new();
                difficulty.insert(String::from("total_ops"), total);
                difficulty.insert(String::from("target_ops"), target);
                out.push(TaskInstance::new(
                    TaskKind::EntityTracking,
                    world.render_scenario(q),
                    render_contents(&final_boxes[q]),
                    difficulty,
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::oracle_solve;

    const A6_SCENARIO: &str = "Box 0 contains the key and the plant, Box 1 contains the dish, \
        Box 2 contains the block and the shell, Box 3 contains the brick and the flower and the \
        string, Box 4 contains nothing, Box 5 contains the card, Box 6 contains the cash and the \
        guitar and the wire. Remove the brick from Box 3. Put the mirror into Box 3. \
        What does Box 0 contain?";

    #[test]
    fn appendix_scenario_parses_and_solves() {
        let (world, q) = parse_scenario(A6_SCENARIO).unwrap();
        assert_eq!(q, 0);
        assert_eq!(world.ops.len(), 2);
        let final_boxes = world.simulate().unwrap();
        assert_eq!(render_contents(&final_boxes[0]), "the key and the plant");
        assert_eq!(
            final_boxes[3],
            vec!["flower".to_string(), "string".into(), "mirror".into()]
        );
    }

    #[test]
    fn grid_cell_count_constant_matches() {
        let mut cells = 0;
        for total in (2..=30u32).step_by(2) {
            cells += ((total.min(24) / 2) + 1) as usize;
        }
        assert_eq!(cells, ENTITY_GRID_CELLS);
    }

    #[test]
    fn default_sizes_hit_table() {
        // per_cell = 100 -> 12900 instances
        let data = gen_entity_tracking(0, 1);
        assert_eq!(data.len(), ENTITY_GRID_CELLS);
    }

    #[test]
    fn zero_ops_empty_box_yields_nothing() {
        let world = BoxWorld::new(alloc::vec![Vec::new(); NUM_BOXES]);
        let text = world.render_scenario(4);
        let (parsed, q) = parse_scenario(&text).unwrap();
        let boxes = parsed.simulate().unwrap();
        assert_eq!(render_contents(&boxes[q]), "nothing");
    }

    #[test]
    fn targets_agree_with_oracle() {
        let data = gen_entity_tracking(1, 1);
        for inst in data.iter().step_by(7) {
            assert_eq!(oracle_solve(inst).unwrap(), inst.target);
        }
    }

    #[test]
    fn target_op_counts_are_exact() {
        let data = gen_entity_tracking(2, 1);
        for inst in data.iter().step_by(13) {
            let (world, q) = parse_scenario(&inst.prompt).unwrap();
            let concern = world.ops.iter().filter(|o| o.concerns(q)).count() as u32;
            assert_eq!(concern, inst.difficulty["target_ops"]);
            assert_eq!(world.ops.len() as u32, inst.difficulty["total_ops"]);
        }
    }

    #[test]
    fn boxes_never_exceed_capacity() {
        let data = gen_entity_tracking(3, 1);
        for inst in data.iter().step_by(17) {
            let (world, _) = parse_scenario(&inst.prompt).unwrap();
            let mut boxes = world.boxes.clone();
            for b in &boxes {
                assert!(b.len() <= MAX_BOX_SIZE);
            }
            for op in &world.ops {
                apply_op(&mut boxes, op);
                for b in &boxes {
                    assert!(b.len() <= MAX_BOX_SIZE);
                }
            }
        }
    }
}
