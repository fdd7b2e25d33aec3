//! Procedural multi-room gridworld.
//!
//! Cells are 0.25 m squares. Objects live on wall cells that border the
//! floor; a viewpoint of an object is a floor cell within the viewpoint
//! radius that has line of sight to it. The agent pose is continuous in
//! position and discrete in yaw and pitch.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semspace::{Codebook, Embedding, InstanceDescriptor, SemanticSpaceConfig};
use crate::{io, seed};

pub const CELL_METERS: f64 = 0.25;

/// Sentinel for unreachable cells in a distance field.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
}

/// Integer grid coordinate `(x, y)`; `y` grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos(pub usize, pub usize);

impl GridPos {
    pub fn center(self) -> (f64, f64) {
        (self.0 as f64 + 0.5, self.1 as f64 + 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub descriptor: InstanceDescriptor,
    pub cell: GridPos,
    /// Height band: -1 low, 0 level, +1 high. A view whose pitch differs
    /// from the band sees the object at half weight.
    pub elevation: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub objects: Vec<PlacedObject>,
    pub viewpoints: BTreeMap<String, Vec<GridPos>>,
    object_at: HashMap<GridPos, usize>,
}

/// Scene JSON layout: rows of `.` (floor) and `#` (wall).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene_id: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<String>,
    pub objects: Vec<PlacedObject>,
    pub viewpoints: BTreeMap<String, Vec<GridPos>>,
}

impl Scene {
    /// Builds a scene from explicit parts and validates every invariant.
    pub fn new(
        scene_id: impl Into<String>,
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        objects: Vec<PlacedObject>,
        viewpoints: BTreeMap<String, Vec<GridPos>>,
    ) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Dimension {
                context: "scene cells",
                expected: width * height,
                actual: cells.len(),
            });
        }
        let object_at = objects.iter().enumerate().map(|(i, o)| (o.cell, i)).collect();
        let scene = Self {
            scene_id: scene_id.into(),
            width,
            height,
            cells,
            objects,
            viewpoints,
            object_at,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Parses rows of `.`/`#`; objects and viewpoints are added separately.
    pub fn from_rows(scene_id: &str, rows: &[&str]) -> Result<(usize, usize, Vec<Cell>)> {
        let height = rows.len();
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut cells = Vec::with_capacity(width * height);
        for row in rows {
            if row.len() != width {
                return Err(Error::input(format!("{scene_id}: ragged cell rows")));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '.' => Cell::Floor,
                    '#' => Cell::Wall,
                    other => return Err(Error::input(format!("bad cell character `{other}`"))),
                });
            }
        }
        Ok((width, height, cells))
    }

    pub fn cell(&self, p: GridPos) -> Cell {
        if p.0 >= self.width || p.1 >= self.height {
            Cell::Wall
        } else {
            self.cells[p.1 * self.width + p.0]
        }
    }

    pub fn is_floor(&self, p: GridPos) -> bool {
        self.cell(p) == Cell::Floor
    }

    fn index(&self, p: GridPos) -> usize {
        p.1 * self.width + p.0
    }

    pub fn floor_cells(&self) -> Vec<GridPos> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| GridPos(x, y)))
            .filter(|&p| self.is_floor(p))
            .collect()
    }

    pub fn object_at(&self, p: GridPos) -> Option<usize> {
        self.object_at.get(&p).copied()
    }

    pub fn object_index(&self, instance_id: &str) -> Option<usize> {
        self.objects
            .iter()
            .position(|o| o.descriptor.instance_id == instance_id)
    }

    fn neighbors4(&self, p: GridPos) -> impl Iterator<Item = GridPos> + '_ {
        let (x, y) = (p.0 as isize, p.1 as isize);
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
                    .then_some(GridPos(nx as usize, ny as usize))
            })
    }

    /// BFS step counts from any of `sources` (4-connected, floor only).
    pub fn distance_field(&self, sources: &[GridPos]) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.cells.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if self.is_floor(s) && dist[self.index(s)] == UNREACHABLE {
                dist[self.index(s)] = 0;
                queue.push_back(s);
            }
        }
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index(p)];
            for n in self.neighbors4(p) {
                if self.is_floor(n) && dist[self.index(n)] == UNREACHABLE {
                    dist[self.index(n)] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn field_at(&self, field: &[u32], p: GridPos) -> u32 {
        if p.0 >= self.width || p.1 >= self.height {
            UNREACHABLE
        } else {
            field[self.index(p)]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let floor = self.floor_cells();
        let Some(&first) = floor.first() else {
            return Err(Error::input(format!("{}: no floor cells", self.scene_id)));
        };
        let field = self.distance_field(&[first]);
        if floor.iter().any(|&p| self.field_at(&field, p) == UNREACHABLE) {
            return Err(Error::input(format!("{}: floor is not connected", self.scene_id)));
        }
        for o in &self.objects {
            let on_floor = self.is_floor(o.cell);
            let borders_floor = self.neighbors4(o.cell).any(|n| self.is_floor(n));
            if !(on_floor || borders_floor) {
                return Err(Error::input(format!(
                    "{}: object {} is not reachable from the floor",
                    self.scene_id, o.descriptor.instance_id
                )));
            }
            match self.viewpoints.get(&o.descriptor.instance_id) {
                Some(v) if !v.is_empty() && v.iter().all(|&p| self.is_floor(p)) => {}
                _ => {
                    return Err(Error::input(format!(
                        "{}: object {} needs at least one floor viewpoint",
                        self.scene_id, o.descriptor.instance_id
                    )))
                }
            }
            if !(-1..=1).contains(&o.elevation) {
                return Err(Error::input("object elevation must be -1, 0 or 1"));
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> SceneFile {
        let cells = (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| match self.cell(GridPos(x, y)) {
                        Cell::Floor => '.',
                        Cell::Wall => '#',
                    })
                    .collect()
            })
            .collect();
        SceneFile {
            scene_id: self.scene_id.clone(),
            width: self.width,
            height: self.height,
            cells,
            objects: self.objects.clone(),
            viewpoints: self.viewpoints.clone(),
        }
    }

    pub fn from_file(file: SceneFile) -> Result<Self> {
        let rows: Vec<&str> = file.cells.iter().map(|s| s.as_str()).collect();
        let (w, h, cells) = Scene::from_rows(&file.scene_id, &rows)?;
        if (w, h) != (file.width, file.height) {
            return Err(Error::input("scene width/height disagree with cell rows"));
        }
        Scene::new(file.scene_id, w, h, cells, file.objects, file.viewpoints)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: SceneFile = io::read_json(path)?;
        Scene::from_file(file).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Straight-line visibility from a floor cell center to an object cell.
    pub fn line_of_sight(&self, from: GridPos, to: GridPos) -> bool {
        let (ax, ay) = from.center();
        let (bx, by) = to.center();
        let len = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        let steps = (len / 0.05).ceil() as usize;
        for i in 1..steps {
            let t = i as f64 / steps as f64;
            let p = GridPos(
                (ax + t * (bx - ax)).floor() as usize,
                (ay + t * (by - ay)).floor() as usize,
            );
            if p != to && !self.is_floor(p) {
                return false;
            }
        }
        true
    }

    /// Floor cells within `radius_m` of `target` that can see it.
    pub fn compute_viewpoints(&self, target: GridPos, radius_m: f64) -> Vec<GridPos> {
        let r = radius_m / CELL_METERS;
        let reach = r.ceil() as isize;
        let mut out = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (x, y) = (target.0 as isize + dx, target.1 as isize + dy);
                if x < 0 || y < 0 {
                    continue;
                }
                let p = GridPos(x as usize, y as usize);
                if p == target || !self.is_floor(p) {
                    continue;
                }
                if ((dx * dx + dy * dy) as f64).sqrt() <= r + 1e-9 && self.line_of_sight(p, target) {
                    out.push(p);
                }
            }
        }
        out.sort_by_key(|p| (p.1, p.0));
        out
    }
}

// ---------------------------------------------------------------------------
// Generation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    pub rooms: usize,
    /// inclusive `[min, max]` grid width in cells, outer walls included
    pub width: [usize; 2],
    pub height: [usize; 2],
    pub objects_per_room: usize,
    pub obstacles_per_room: usize,
    /// Forces two instances of this category with different attributes.
    pub duplicate_category: Option<String>,
    /// Draw every other object's category without repeats within a scene.
    pub distinct_categories: bool,
    pub viewpoint_radius_m: f64,
    pub context_radius_m: f64,
    pub max_context_tags: usize,
    pub max_attempts: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            rooms: 2,
            width: [12, 16],
            height: [10, 14],
            objects_per_room: 3,
            obstacles_per_room: 1,
            duplicate_category: None,
            distinct_categories: false,
            viewpoint_radius_m: 0.5,
            context_radius_m: 1.5,
            max_context_tags: 2,
            max_attempts: 50,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self, space: &SemanticSpaceConfig) -> Result<()> {
        if self.rooms == 0 {
            return Err(Error::config("world.rooms must be at least 1"));
        }
        if self.width[0] < 8 || self.height[0] < 8 {
            return Err(Error::config("scene size range must be at least 8x8"));
        }
        if self.width[0] > self.width[1] || self.height[0] > self.height[1] {
            return Err(Error::config("scene size range min exceeds max"));
        }
        if self.viewpoint_radius_m < CELL_METERS {
            return Err(Error::config("viewpoint radius must cover at least one cell"));
        }
        if let Some(c) = &self.duplicate_category {
            if !space.categories.contains(c) {
                return Err(Error::UnknownCategory(c.clone()));
            }
        }
        if self.distinct_categories && self.rooms * self.objects_per_room > space.categories.len() {
            return Err(Error::config(
                "distinct_categories needs at least one category per object",
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("max_attempts must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> usize {
        self.y1 - self.y0 + 1
    }
    fn contains(&self, p: GridPos) -> bool {
        (self.x0..=self.x1).contains(&p.0) && (self.y0..=self.y1).contains(&p.1)
    }
}

pub fn generate_scene(seed: u64, gen: &SceneGenConfig, space: &SemanticSpaceConfig) -> Result<Scene> {
    gen.validate(space)?;
    let mut last = String::new();
    for attempt in 0..gen.max_attempts {
        let mut rng = seed::rng(seed, &format!("scene/{attempt}"));
        match try_generate(seed, gen, space, &mut rng) {
            Ok(scene) => return Ok(scene),
            Err(reason) => last = reason,
        }
    }
    Err(Error::Generation {
        attempts: gen.max_attempts,
        reason: last,
    })
}

fn random_attributes(space: &SemanticSpaceConfig, rng: &mut seed::Rng) -> BTreeMap<String, String> {
    space
        .attribute_vocab
        .iter()
        .map(|(facet, names)| (facet.clone(), names[rng.random_range(0..names.len())].clone()))
        .collect()
}

fn try_generate(
    seed: u64,
    gen: &SceneGenConfig,
    space: &SemanticSpaceConfig,
    rng: &mut seed::Rng,
) -> std::result::Result<Scene, String> {
    let width = rng.random_range(gen.width[0]..=gen.width[1]);
    let height = rng.random_range(gen.height[0]..=gen.height[1]);
    let mut cells = vec![Cell::Wall; width * height];
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            cells[y * width + x] = Cell::Floor;
        }
    }

    let mut rooms = vec![Rect {
        x0: 1,
        y0: 1,
        x1: width - 2,
        y1: height - 2,
    }];
    let mut doors = Vec::new();
    for _ in 1..gen.rooms {
        let (i, _) = rooms
            .iter()
            .enumerate()
            .max_by_key(|(i, r)| (r.w() * r.h(), usize::MAX - i))
            .expect("at least one room");
        let r = rooms[i];
        if r.w() >= r.h() {
            if r.w() < 7 {
                return Err("rooms too small to split".into());
            }
            let c = rng.random_range(r.x0 + 3..=r.x1 - 3);
            let door = rng.random_range(r.y0..=r.y1);
            for y in r.y0..=r.y1 {
                if y != door {
                    cells[y * width + c] = Cell::Wall;
                }
            }
            doors.push(GridPos(c, door));
            rooms[i] = Rect { x1: c - 1, ..r };
            rooms.push(Rect { x0: c + 1, ..r });
        } else {
            if r.h() < 7 {
                return Err("rooms too small to split".into());
            }
            let c = rng.random_range(r.y0 + 3..=r.y1 - 3);
            let door = rng.random_range(r.x0..=r.x1);
            for x in r.x0..=r.x1 {
                if x != door {
                    cells[c * width + x] = Cell::Wall;
                }
            }
            doors.push(GridPos(door, c));
            rooms[i] = Rect { y1: c - 1, ..r };
            rooms.push(Rect { y0: c + 1, ..r });
        }
    }

    let mut probe = Scene {
        scene_id: format!("scene-{seed}"),
        width,
        height,
        cells,
        objects: Vec::new(),
        viewpoints: BTreeMap::new(),
        object_at: HashMap::new(),
    };

    let near_door =
        |p: GridPos, doors: &[GridPos]| doors.iter().any(|d| d.0.abs_diff(p.0) <= 1 && d.1.abs_diff(p.1) <= 1);
    for room in &rooms {
        if room.w() < 3 || room.h() < 3 {
            continue;
        }
        let mut placed = 0;
        let mut tries = 0;
        while placed < gen.obstacles_per_room && tries < 30 {
            tries += 1;
            let p = GridPos(
                rng.random_range(room.x0 + 1..=room.x1 - 1),
                rng.random_range(room.y0 + 1..=room.y1 - 1),
            );
            if !probe.is_floor(p) || near_door(p, &doors) {
                continue;
            }
            let i = probe.index(p);
            probe.cells[i] = Cell::Wall;
            let floor = probe.floor_cells();
            let field = probe.distance_field(&floor[..1]);
            if floor.iter().all(|&f| probe.field_at(&field, f) != UNREACHABLE) {
                placed += 1;
            } else {
                probe.cells[i] = Cell::Floor;
            }
        }
    }

    let mut objects: Vec<PlacedObject> = Vec::new();
    let mut viewpoints = BTreeMap::new();
    let mut duplicate_attrs: Option<BTreeMap<String, String>> = None;
    for (room_i, room) in rooms.iter().enumerate() {
        let mut candidates: Vec<GridPos> = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let p = GridPos(x, y);
                if probe.is_floor(p) {
                    continue;
                }
                if probe.neighbors4(p).any(|n| probe.is_floor(n) && room.contains(n)) {
                    candidates.push(p);
                }
            }
        }
        let mut placed = 0;
        while placed < gen.objects_per_room {
            let free: Vec<GridPos> = candidates
                .iter()
                .copied()
                .filter(|c| {
                    objects
                        .iter()
                        .all(|o| o.cell.0.abs_diff(c.0) > 1 || o.cell.1.abs_diff(c.1) > 1)
                })
                .collect();
            if free.is_empty() {
                return Err(format!("too many objects for room {room_i}"));
            }
            let cell = free[rng.random_range(0..free.len())];
            let vps = probe.compute_viewpoints(cell, gen.viewpoint_radius_m);
            if vps.is_empty() {
                candidates.retain(|&c| c != cell);
                continue;
            }
            let k = objects.len();
            let (category, attributes) = match (&gen.duplicate_category, k) {
                (Some(c), 0) => {
                    let a = random_attributes(space, rng);
                    duplicate_attrs = Some(a.clone());
                    (c.clone(), a)
                }
                (Some(c), 1) => {
                    let first = duplicate_attrs.clone().unwrap_or_default();
                    let mut a = random_attributes(space, rng);
                    let mut guard = 0;
                    while a == first && guard < 100 {
                        a = random_attributes(space, rng);
                        guard += 1;
                    }
                    if a == first {
                        return Err("attribute vocabulary too small for duplicates".into());
                    }
                    (c.clone(), a)
                }
                _ => {
                    let pool: Vec<&String> = space
                        .categories
                        .iter()
                        .filter(|c| !gen.distinct_categories || objects.iter().all(|o| &o.descriptor.category != *c))
                        .collect();
                    if pool.is_empty() {
                        return Err("not enough categories for distinct objects".into());
                    }
                    (
                        pool[rng.random_range(0..pool.len())].clone(),
                        random_attributes(space, rng),
                    )
                }
            };
            let roll: f64 = rng.random();
            let elevation = if roll < 0.5 {
                0
            } else if roll < 0.75 {
                -1
            } else {
                1
            };
            let instance_id = format!("s{seed}-o{k}");
            viewpoints.insert(instance_id.clone(), vps);
            objects.push(PlacedObject {
                descriptor: InstanceDescriptor {
                    instance_id,
                    category,
                    attributes,
                    context_tags: Vec::new(),
                },
                cell,
                elevation,
            });
            placed += 1;
        }
    }
    if gen.duplicate_category.is_some() && objects.len() < 2 {
        return Err("duplicate category needs at least two objects".into());
    }

    let ctx_cells = gen.context_radius_m / CELL_METERS;
    let snapshot = objects.clone();
    for o in objects.iter_mut() {
        let mut near: Vec<(f64, usize)> = snapshot
            .iter()
            .enumerate()
            .filter(|(_, n)| n.cell != o.cell)
            .map(|(i, n)| {
                let d =
                    ((n.cell.0 as f64 - o.cell.0 as f64).powi(2) + (n.cell.1 as f64 - o.cell.1 as f64).powi(2)).sqrt();
                (d, i)
            })
            .filter(|(d, _)| *d <= ctx_cells + 1e-9)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, i) in near {
            let c = &snapshot[i].descriptor.category;
            if o.descriptor.context_tags.len() >= gen.max_context_tags {
                break;
            }
            if !o.descriptor.context_tags.contains(c) {
                o.descriptor.context_tags.push(c.clone());
            }
        }
    }

    Scene::new(probe.scene_id, width, height, probe.cells, objects, viewpoints).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// Kinematics

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
    Stop,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::LookUp,
        Action::LookDown,
        Action::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub yaw: u32,
    pub pitch: i8,
}

impl AgentPose {
    pub fn at_cell(cell: GridPos, yaw: u32, pitch: i8) -> Self {
        let (x, y) = cell.center();
        Self { x, y, yaw, pitch }
    }

    pub fn cell(&self) -> GridPos {
        GridPos(self.x.floor().max(0.0) as usize, self.y.floor().max(0.0) as usize)
    }

    pub fn is_valid(&self, scene: &Scene, headings: u32) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && scene.is_floor(self.cell())
            && self.yaw < headings
            && (-1..=1).contains(&self.pitch)
    }
}

pub fn yaw_radians(yaw: u32, headings: u32) -> f64 {
    2.0 * PI * yaw as f64 / headings as f64
}

/// Absolute angular difference between two headings, in `[0, π]`.
pub fn yaw_error(a: u32, b: u32, headings: u32) -> f64 {
    let d = a.abs_diff(b) % headings;
    let steps = d.min(headings - d);
    2.0 * PI * steps as f64 / headings as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub pose: AgentPose,
    pub stopped: bool,
    /// meters actually travelled
    pub displacement: f64,
}

pub fn step(scene: &Scene, pose: &AgentPose, action: Action, headings: u32) -> StepOutcome {
    let mut next = *pose;
    let mut displacement = 0.0;
    match action {
        Action::MoveForward => {
            let theta = yaw_radians(pose.yaw, headings);
            let (nx, ny) = (pose.x + theta.cos(), pose.y + theta.sin());
            if nx >= 0.0 && ny >= 0.0 && scene.is_floor(GridPos(nx.floor() as usize, ny.floor() as usize)) {
                next.x = nx;
                next.y = ny;
                displacement = CELL_METERS;
            }
        }
        Action::TurnLeft => next.yaw = (pose.yaw + 1) % headings,
        Action::TurnRight => next.yaw = (pose.yaw + headings - 1) % headings,
        Action::LookUp => next.pitch = (pose.pitch + 1).min(1),
        Action::LookDown => next.pitch = (pose.pitch - 1).max(-1),
        Action::Stop => {}
    }
    StepOutcome {
        pose: next,
        stopped: action == Action::Stop,
        displacement,
    }
}

// ---------------------------------------------------------------------------
// Rendering

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FovConfig {
    pub n_rays: usize,
    pub hfov_deg: f64,
    pub max_range_m: f64,
    /// weight of a ray that sees no object, relative to an object ray at the
    /// same distance; it pulls the view toward the null content direction
    pub background_weight: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        Self {
            n_rays: 16,
            hfov_deg: 79.0,
            max_range_m: 3.0,
            background_weight: 0.5,
        }
    }
}

impl FovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rays == 0 {
            return Err(Error::config("fov.n_rays must be positive"));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 360.0) {
            return Err(Error::config("fov.hfov_deg must be in (0, 360)"));
        }
        if self.max_range_m.is_nan() || self.max_range_m <= 0.0 {
            return Err(Error::config("fov.max_range_m must be positive"));
        }
        if !(self.background_weight >= 0.0 && self.background_weight.is_finite()) {
            return Err(Error::config("fov.background_weight must be finite and non-negative"));
        }
        Ok(())
    }

    fn ray_offsets(&self) -> Vec<f64> {
        let half = self.hfov_deg.to_radians() / 2.0;
        if self.n_rays == 1 {
            return vec![0.0];
        }
        (0..self.n_rays)
            .map(|i| -half + 2.0 * half * i as f64 / (self.n_rays - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// per-ray free distance / max range, in `[0, 1]`
    pub layout: Vec<f64>,
    pub semantic: Embedding,
}

/// Geometry of one view: layout profile plus weighted visible objects.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGeometry {
    pub layout: Vec<f64>,
    /// `(object index, weight)` sorted by object index
    pub visible: Vec<(usize, f64)>,
    /// total weight of rays that hit no object
    pub background: f64,
}

/// Grid traversal; returns distance in cells to the first non-floor cell.
fn cast_ray(scene: &Scene, x: f64, y: f64, dx: f64, dy: f64, max_cells: f64) -> (f64, Option<GridPos>) {
    let mut cx = x.floor() as isize;
    let mut cy = y.floor() as isize;
    let step_x: isize = if dx > 0.0 { 1 } else { -1 };
    let step_y: isize = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx.abs() < 1e-12 {
        f64::INFINITY
    } else {
        1.0 / dx.abs()
    };
    let t_delta_y = if dy.abs() < 1e-12 {
        f64::INFINITY
    } else {
        1.0 / dy.abs()
    };
    let mut t_max_x = if dx.abs() < 1e-12 {
        f64::INFINITY
    } else if dx > 0.0 {
        (cx as f64 + 1.0 - x) / dx
    } else {
        (x - cx as f64) / -dx
    };
    let mut t_max_y = if dy.abs() < 1e-12 {
        f64::INFINITY
    } else if dy > 0.0 {
        (cy as f64 + 1.0 - y) / dy
    } else {
        (y - cy as f64) / -dy
    };
    loop {
        let t;
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cy += step_y;
        }
        if t >= max_cells {
            return (max_cells, None);
        }
        if cx < 0 || cy < 0 {
            return (t, None);
        }
        let p = GridPos(cx as usize, cy as usize);
        if !scene.is_floor(p) {
            return (t, Some(p));
        }
    }
}

pub fn view_geometry(scene: &Scene, pose: &AgentPose, headings: u32, fov: &FovConfig) -> ViewGeometry {
    let max_cells = fov.max_range_m / CELL_METERS;
    let theta = yaw_radians(pose.yaw, headings);
    let mut layout = Vec::with_capacity(fov.n_rays);
    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    let mut background = 0.0;
    for off in fov.ray_offsets() {
        let a = theta + off;
        let (dist, hit) = cast_ray(scene, pose.x, pose.y, a.cos(), a.sin(), max_cells);
        layout.push((dist / max_cells).clamp(0.0, 1.0));
        if let Some(obj) = hit.and_then(|p| scene.object_at(p)) {
            let meters = dist * CELL_METERS;
            let mut w = 1.0 / (1.0 + meters);
            if scene.objects[obj].elevation != pose.pitch {
                w *= 0.5;
            }
            *weights.entry(obj).or_insert(0.0) += w;
        } else {
            background += fov.background_weight / (1.0 + dist * CELL_METERS);
        }
    }
    ViewGeometry {
        layout,
        visible: weights.into_iter().collect(),
        background,
    }
}

/// Per-object image embeddings for one scene, aligned with `scene.objects`.
pub fn instance_table(scene: &Scene, codebook: &Codebook) -> Result<Vec<Embedding>> {
    scene
        .objects
        .iter()
        .map(|o| codebook.instance_embedding(&o.descriptor))
        .collect()
}

pub fn render_with(
    scene: &Scene,
    table: &[Embedding],
    pose: &AgentPose,
    codebook: &Codebook,
    headings: u32,
    fov: &FovConfig,
) -> Observation {
    let geo = view_geometry(scene, pose, headings, fov);
    let null = codebook.null_content();
    let mut vis: Vec<(&Embedding, f64)> = geo.visible.iter().map(|&(i, w)| (&table[i], w)).collect();
    if !vis.is_empty() && geo.background > 0.0 {
        vis.push((&null, geo.background));
    }
    let semantic = codebook.mix(&vis).expect("weights are positive");
    Observation {
        layout: geo.layout,
        semantic,
    }
}

pub fn render(
    scene: &Scene,
    pose: &AgentPose,
    codebook: &Codebook,
    headings: u32,
    fov: &FovConfig,
) -> Result<Observation> {
    let table = instance_table(scene, codebook)?;
    Ok(render_with(scene, &table, pose, codebook, headings, fov))
}

/// Shortest 4-connected path length in meters; infinite when disconnected.
pub fn geodesic_distance(scene: &Scene, a: GridPos, b: GridPos) -> Result<f64> {
    for p in [a, b] {
        if !scene.is_floor(p) {
            return Err(Error::input(format!("geodesic endpoint {p:?} is not a floor cell")));
        }
    }
    let field = scene.distance_field(&[a]);
    let d = scene.field_at(&field, b);
    Ok(if d == UNREACHABLE {
        f64::INFINITY
    } else {
        d as f64 * CELL_METERS
    })
}

/// Distance fields to each object's viewpoints, keyed by object index.
#[derive(Clone, Debug)]
pub struct GoalFields {
    fields: Vec<Vec<u32>>,
}

impl GoalFields {
    pub fn new(scene: &Scene) -> Self {
        let fields = scene
            .objects
            .iter()
            .map(|o| {
                let vps = scene
                    .viewpoints
                    .get(&o.descriptor.instance_id)
                    .map(|v| v.as_slice())
                    .unwrap_or(&[]);
                scene.distance_field(vps)
            })
            .collect();
        Self { fields }
    }

    /// Meters from `cell` to the nearest viewpoint of object `obj`.
    pub fn distance(&self, scene: &Scene, obj: usize, cell: GridPos) -> f64 {
        match scene.field_at(&self.fields[obj], cell) {
            UNREACHABLE => f64::INFINITY,
            d => d as f64 * CELL_METERS,
        }
    }

    pub fn field(&self, obj: usize) -> &[u32] {
        &self.fields[obj]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// number of uniform yaw headings (Ω)
    pub headings: u32,
    pub fov: FovConfig,
    pub generation: SceneGenConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            headings: 12,
            fov: FovConfig::default(),
            generation: SceneGenConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self, space: &SemanticSpaceConfig) -> Result<()> {
        if self.headings < 4 {
            return Err(Error::config("world.headings must be at least 4"));
        }
        self.fov.validate()?;
        self.generation.validate(space)
    }
}

/// A scene plus the per-scene caches every rollout needs.
#[derive(Clone, Debug)]
pub struct SceneAssets {
    pub scene: Scene,
    pub table: Vec<Embedding>,
    pub fields: GoalFields,
}

impl SceneAssets {
    pub fn new(scene: Scene, codebook: &Codebook) -> Result<Self> {
        let table = instance_table(&scene, codebook)?;
        let fields = GoalFields::new(&scene);
        Ok(Self { scene, table, fields })
    }

    pub fn render(&self, pose: &AgentPose, codebook: &Codebook, world: &WorldConfig) -> Observation {
        render_with(&self.scene, &self.table, pose, codebook, world.headings, &world.fov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semspace::SemanticSpaceConfig;
    use proptest::prelude::*;

    fn descriptor(id: &str, category: &str) -> InstanceDescriptor {
        let mut attributes = BTreeMap::new();
        attributes.insert("color".to_string(), "red".to_string());
        InstanceDescriptor {
            instance_id: id.into(),
            category: category.into(),
            attributes,
            context_tags: vec![],
        }
    }

    fn hand_scene(rows: &[&str], objects: Vec<(GridPos, &str)>) -> Scene {
        let (w, h, cells) = Scene::from_rows("hand", rows).unwrap();
        let mut probe = Scene {
            scene_id: "hand".into(),
            width: w,
            height: h,
            cells: cells.clone(),
            objects: vec![],
            viewpoints: BTreeMap::new(),
            object_at: HashMap::new(),
        };
        let mut placed = vec![];
        let mut vps = BTreeMap::new();
        for (i, (cell, cat)) in objects.into_iter().enumerate() {
            let id = format!("o{i}");
            vps.insert(id.clone(), probe.compute_viewpoints(cell, 0.5));
            placed.push(PlacedObject {
                descriptor: descriptor(&id, cat),
                cell,
                elevation: 0,
            });
        }
        probe.objects = placed.clone();
        Scene::new("hand", w, h, cells, placed, vps).unwrap()
    }

    fn open3() -> Scene {
        hand_scene(&["#####", "#...#", "#...#", "#...#", "#####"], vec![])
    }

    #[test]
    fn geodesic_examples() {
        let s = open3();
        assert_eq!(geodesic_distance(&s, GridPos(1, 1), GridPos(1, 1)).unwrap(), 0.0);
        assert_eq!(geodesic_distance(&s, GridPos(1, 1), GridPos(3, 3)).unwrap(), 1.0);
        assert!(geodesic_distance(&s, GridPos(0, 0), GridPos(1, 1)).is_err());
    }

    #[test]
    fn geodesic_matches_bfs_around_a_wall() {
        let s = hand_scene(&["#####", "#...#", "###.#", "#...#", "#####"], vec![]);
        // (1,1) → (1,3) must detour through column 3: 2 + 2 + 2 = 6 steps.
        assert_eq!(geodesic_distance(&s, GridPos(1, 1), GridPos(1, 3)).unwrap(), 1.5);
    }

    #[test]
    fn step_examples() {
        let s = open3();
        let pose = AgentPose::at_cell(GridPos(3, 2), 0, 0);
        let out = step(&s, &pose, Action::MoveForward, 12);
        assert_eq!(out.pose, pose);
        assert_eq!(out.displacement, 0.0);

        let mut p = pose;
        for _ in 0..12 {
            p = step(&s, &p, Action::TurnLeft, 12).pose;
        }
        assert_eq!(p.yaw, pose.yaw);

        let up = AgentPose { pitch: 1, ..pose };
        assert_eq!(step(&s, &up, Action::LookUp, 12).pose.pitch, 1);
        let down = AgentPose { pitch: -1, ..pose };
        assert_eq!(step(&s, &down, Action::LookDown, 12).pose.pitch, -1);

        let stop = step(&s, &pose, Action::Stop, 12);
        assert!(stop.stopped);
        assert_eq!(stop.pose, pose);

        let moved = step(&s, &AgentPose::at_cell(GridPos(1, 2), 0, 0), Action::MoveForward, 12);
        assert_eq!(moved.pose.cell(), GridPos(2, 2));
        assert_eq!(moved.displacement, CELL_METERS);
    }

    #[test]
    fn facing_an_empty_wall_sees_nothing() {
        let s = open3();
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let pose = AgentPose::at_cell(GridPos(3, 2), 0, 0);
        let fov = FovConfig::default();
        let obs = render(&s, &pose, &cb, 12, &fov).unwrap();
        assert_eq!(obs.semantic, cb.null_content());
        let bucket = 1.0 / (fov.max_range_m / CELL_METERS);
        for v in &obs.layout {
            assert!(*v <= 1.5 * bucket, "{v}");
        }
    }

    #[test]
    fn single_object_ahead_is_the_whole_view() {
        let s = hand_scene(
            &["#######", "#.....#", "#.....#", "#.....#", "#######"],
            vec![(GridPos(6, 2), "bed")],
        );
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let pose = AgentPose::at_cell(GridPos(5, 2), 0, 0);
        let bare = FovConfig {
            background_weight: 0.0,
            ..FovConfig::default()
        };
        let obs = render(&s, &pose, &cb, 12, &bare).unwrap();
        let e = cb.instance_embedding(&s.objects[0].descriptor).unwrap();
        assert!((obs.semantic.cosine(&e) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn background_dilutes_distant_objects() {
        let s = hand_scene(
            &["#######", "#.....#", "#.....#", "#.....#", "#######"],
            vec![(GridPos(6, 2), "bed")],
        );
        let cb = Codebook::build(&SemanticSpaceConfig::default()).unwrap();
        let e = cb.instance_embedding(&s.objects[0].descriptor).unwrap();
        let fov = FovConfig::default();
        let cos_at = |x| {
            let obs = render(&s, &AgentPose::at_cell(GridPos(x, 2), 0, 0), &cb, 12, &fov).unwrap();
            obs.semantic.cosine(&e)
        };
        assert!((cos_at(5) - 1.0).abs() < 1e-6);
        let (near, far) = (cos_at(4), cos_at(2));
        assert!(near < 1.0 - 1e-6, "{near}");
        assert!(far < near, "{far} vs {near}");
    }

    /// Marches every ray in tiny increments; independent of the grid traversal.
    fn march_oracle(scene: &Scene, pose: &AgentPose, fov: &FovConfig) -> Vec<usize> {
        let max = fov.max_range_m / CELL_METERS;
        let theta = yaw_radians(pose.yaw, 12);
        let mut hits = std::collections::BTreeSet::new();
        for off in fov.ray_offsets() {
            let (dx, dy) = ((theta + off).cos(), (theta + off).sin());
            let mut t = 0.0;
            while t < max {
                let p = GridPos((pose.x + t * dx).floor() as usize, (pose.y + t * dy).floor() as usize);
                if !scene.is_floor(p) {
                    if let Some(o) = scene.object_at(p) {
                        hits.insert(o);
                    }
                    break;
                }
                t += 1e-3;
            }
        }
        hits.into_iter().collect()
    }

    #[test]
    fn objects_behind_walls_are_hidden() {
        // Object 0 sits in the top wall behind an interior block; object 1
        // is in plain view on the right wall.
        let s = hand_scene(
            &["#######", "#.....#", "#.###.#", "#.....#", "#######"],
            vec![(GridPos(3, 0), "plant"), (GridPos(6, 3), "chair")],
        );
        let fov = FovConfig::default();
        let pose = AgentPose::at_cell(GridPos(3, 3), 9, 0);
        let geo = view_geometry(&s, &pose, 12, &fov);
        let visible: Vec<usize> = geo.visible.iter().map(|v| v.0).collect();
        assert_eq!(visible, march_oracle(&s, &pose, &fov));
        assert!(visible.is_empty());
        let pose = AgentPose::at_cell(GridPos(3, 3), 0, 0);
        let visible: Vec<usize> = view_geometry(&s, &pose, 12, &fov).visible.iter().map(|v| v.0).collect();
        assert_eq!(visible, march_oracle(&s, &pose, &fov));
        assert_eq!(visible, vec![1]);
        // From the top corridor the plant is visible again.
        let pose = AgentPose::at_cell(GridPos(1, 1), 0, 0);
        let pose = AgentPose { yaw: 11, ..pose };
        let visible: Vec<usize> = view_geometry(&s, &pose, 12, &fov).visible.iter().map(|v| v.0).collect();
        assert_eq!(visible, march_oracle(&s, &pose, &fov));
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let space = SemanticSpaceConfig::default();
        let gen = SceneGenConfig::default();
        let a = generate_scene(3, &gen, &space).unwrap();
        let b = generate_scene(3, &gen, &space).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.objects.len(), gen.rooms * gen.objects_per_room);
    }

    #[test]
    fn duplicate_category_is_honored() {
        let space = SemanticSpaceConfig::default();
        let gen = SceneGenConfig {
            duplicate_category: Some("plant".into()),
            ..Default::default()
        };
        let s = generate_scene(5, &gen, &space).unwrap();
        let plants: Vec<_> = s.objects.iter().filter(|o| o.descriptor.category == "plant").collect();
        assert!(plants.len() >= 2);
        assert_ne!(plants[0].descriptor.instance_id, plants[1].descriptor.instance_id);
        assert_ne!(plants[0].descriptor.attributes, plants[1].descriptor.attributes);
    }

    #[test]
    fn bad_generation_configs() {
        let space = SemanticSpaceConfig::default();
        let zero = SceneGenConfig {
            rooms: 0,
            ..Default::default()
        };
        assert!(matches!(generate_scene(1, &zero, &space), Err(Error::Config(_))));
        let crowded = SceneGenConfig {
            rooms: 1,
            width: [8, 8],
            height: [8, 8],
            objects_per_room: 40,
            max_attempts: 3,
            ..Default::default()
        };
        assert!(matches!(
            generate_scene(1, &crowded, &space),
            Err(Error::Generation { attempts: 3, .. })
        ));
    }

    #[test]
    fn scene_file_round_trip() {
        let space = SemanticSpaceConfig::default();
        let s = generate_scene(9, &SceneGenConfig::default(), &space).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        s.save(&p1).unwrap();
        let back = Scene::load(&p1).unwrap();
        back.save(&p2).unwrap();
        assert_eq!(back, s);
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn geodesic_is_a_metric(seed in 0u64..1000, picks in proptest::collection::vec(0usize..10_000, 3)) {
            let space = SemanticSpaceConfig::default();
            let s = generate_scene(seed, &SceneGenConfig::default(), &space).unwrap();
            let floor = s.floor_cells();
            let p: Vec<GridPos> = picks.iter().map(|i| floor[i % floor.len()]).collect();
            let d = |a, b| geodesic_distance(&s, a, b).unwrap();
            prop_assert_eq!(d(p[0], p[1]), d(p[1], p[0]));
            prop_assert!(d(p[0], p[2]) <= d(p[0], p[1]) + d(p[1], p[2]) + 1e-12);
            prop_assert!(d(p[0], p[1]).is_finite());
        }

        #[test]
        fn renders_are_pure_and_unit_norm(seed in 0u64..1000, cell in 0usize..10_000, yaw in 0u32..12, pitch in -1i8..=1) {
            let space = SemanticSpaceConfig::default();
            let cb = Codebook::build(&space).unwrap();
            let s = generate_scene(seed, &SceneGenConfig::default(), &space).unwrap();
            let floor = s.floor_cells();
            let pose = AgentPose::at_cell(floor[cell % floor.len()], yaw, pitch);
            let fov = FovConfig::default();
            let a = render(&s, &pose, &cb, 12, &fov).unwrap();
            let b = render(&s, &pose, &cb, 12, &fov).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.semantic.is_unit(1e-6));
            prop_assert!(a.layout.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn random_walks_never_enter_walls() {
        use rand::Rng;
        let space = SemanticSpaceConfig::default();
        let mut rng = seed::rng(42, "walk");
        let mut total = 0;
        for seed in 0..10 {
            let s = generate_scene(seed, &SceneGenConfig::default(), &space).unwrap();
            let floor = s.floor_cells();
            for _ in 0..10 {
                let mut pose = AgentPose::at_cell(floor[rng.random_range(0..floor.len())], rng.random_range(0..12), 0);
                for _ in 0..1000 {
                    let a = Action::ALL[rng.random_range(0..6)];
                    pose = step(&s, &pose, a, 12).pose;
                    assert!(pose.is_valid(&s, 12));
                    total += 1;
                }
            }
        }
        assert_eq!(total, 100_000);
    }
}
