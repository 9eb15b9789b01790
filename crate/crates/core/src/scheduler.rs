//! Haptic proxy scheduling: which virtual objects must be physically
//! present around the user, which furniture renders them, and the tasks
//! that move furniture into place or out to the parking band.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, project_onto_segment, Pose2D, Vec2};
use crate::model::{
    FurnitureId, FurnitureKind, ObjectId, PlayArea, Pose, RobotId, UserAvatar, Vector,
    VirtualObject, VirtualScene,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerParams {
    pub placement_tolerance: f64,
    /// Yaw tolerance in radians.
    pub placement_yaw_tolerance: f64,
    /// Walking speed used to turn distance into encounter time.
    pub assumed_user_speed: f64,
    pub parking_spacing: f64,
    /// Minimum improvement before a navigating robot switches task.
    pub hysteresis: f64,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self {
            placement_tolerance: 0.10,
            placement_yaw_tolerance: 10f64.to_radians(),
            assumed_user_speed: 1.0,
            parking_spacing: 1.2,
            hysteresis: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingStatus {
    Pending,
    Enroute,
    Placed,
    /// Placed but no longer required; stays put until needed elsewhere.
    Releasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyBinding {
    pub object: ObjectId,
    pub furniture: FurnitureId,
    pub target: Pose,
    pub status: BindingStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Place,
    RemoveToParking,
    SlideUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyTask {
    pub furniture: FurnitureId,
    pub target: Pose,
    /// Predicted seconds until the user could reach the target.
    pub priority: f64,
    pub kind: TaskKind,
}

/// A virtual object that needs a physical proxy, with its play-area pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequiredProxy {
    pub object: ObjectId,
    pub kind: FurnitureKind,
    pub target: Pose,
    pub sliding: bool,
}

/// Long axis of a virtual surface in the play-area frame.
pub fn surface_segment(scene: &VirtualScene, object: &VirtualObject) -> (Vector, Vector, f64) {
    let pose = scene.physical_pose(object);
    let half = object.dimensions.x / 2.0;
    (
        pose.transform_point(Vector::new(-half, 0.0)),
        pose.transform_point(Vector::new(half, 0.0)),
        pose.heading,
    )
}

/// Center of a sliding proxy of length `proxy_width` on the surface
/// `a`–`b`: the user's projection onto the segment, kept far enough from
/// the ends that the proxy stays on the surface.
pub fn sliding_proxy_target<T: Scalar>(a: Vec2<T>, b: Vec2<T>, heading: T, user: Vec2<T>, proxy_width: T) -> Pose2D<T> {
    let len = a.distance(b);
    let half = proxy_width * T::half();
    let p = if len <= proxy_width {
        (a + b) * T::half()
    } else {
        let dir = (b - a) * (T::one() / len);
        let inner_a = a + dir * half;
        let inner_b = b - dir * half;
        project_onto_segment(user, inner_a, inner_b)
    };
    Pose2D::from_parts(p, heading)
}

fn in_reach(scene: &VirtualScene, object: &VirtualObject, user: &UserAvatar) -> bool {
    scene.physical_footprint(object).distance_to(user.pose.position()) <= user.reach_radius
}

/// Touchable objects whose footprint meets the closed reach disc.
pub fn required_proxies(scene: &VirtualScene, user: &UserAvatar) -> Vec<RequiredProxy> {
    let mut out: Vec<RequiredProxy> = scene
        .objects
        .iter()
        .filter(|o| o.touchable && in_reach(scene, o, user))
        .map(|o| required_entry(scene, o, user))
        .collect();
    out.sort_by(|a, b| a.object.cmp(&b.object));
    out
}

fn required_entry(scene: &VirtualScene, o: &VirtualObject, user: &UserAvatar) -> RequiredProxy {
    let target = match o.sliding {
        Some(s) => {
            let (a, b, h) = surface_segment(scene, o);
            sliding_proxy_target(a, b, h, user.pose.position(), s.proxy_width)
        }
        None => scene.physical_pose(o),
    };
    RequiredProxy { object: o.id.clone(), kind: o.kind, target, sliding: o.sliding.is_some() }
}

/// Physical furniture as seen by the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub id: FurnitureId,
    pub kind: FurnitureKind,
    pub pose: Pose,
    pub carried: bool,
    /// A robot is committed to manipulating this piece.
    pub busy: bool,
    pub liftable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParkingSlot {
    pub position: Vector,
    /// Direction pointing from the slot back into the play area.
    pub inward: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "by", content = "id", rename_all = "snake_case")]
pub enum SlotClaim {
    Robot(RobotId),
    Furniture(FurnitureId),
}

/// Parking positions along the middle of the band around the play area.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParkingLot {
    pub slots: Vec<ParkingSlot>,
    pub claims: BTreeMap<usize, SlotClaim>,
}

impl ParkingLot {
    /// Slots spaced `spacing` apart on each side of the band midline,
    /// keeping clear of the corners.
    pub fn for_area(area: &PlayArea, spacing: f64) -> Self {
        let mut slots = Vec::new();
        if area.margin <= 0.0 || spacing <= 0.0 {
            return Self::default();
        }
        let off = area.margin / 2.0;
        let mut side = |len: f64, place: &dyn Fn(f64) -> Vector, inward: f64| {
            let n = (len / spacing).floor() as usize;
            if n == 0 {
                return;
            }
            let start = (len - (n - 1) as f64 * spacing) / 2.0;
            for i in 0..n {
                slots.push(ParkingSlot { position: place(start + i as f64 * spacing), inward });
            }
        };
        let (w, d) = (area.width, area.depth);
        side(d, &|t| Vector::new(-off, t), 0.0);
        side(w, &|t| Vector::new(t, d + off), -std::f64::consts::FRAC_PI_2);
        side(d, &|t| Vector::new(w + off, d - t), -std::f64::consts::PI);
        side(w, &|t| Vector::new(w - t, -off), std::f64::consts::FRAC_PI_2);
        Self { slots, claims: BTreeMap::new() }
    }

    pub fn claim_of(&self, claim: &SlotClaim) -> Option<usize> {
        self.claims.iter().find(|(_, c)| *c == claim).map(|(i, _)| *i)
    }

    pub fn release(&mut self, claim: &SlotClaim) {
        self.claims.retain(|_, c| c != claim);
    }

    /// Nearest unclaimed slot with no grounded furniture nearby; claims it.
    pub fn claim_nearest(&mut self, from: Vector, claim: SlotClaim, occupied: &[Vector]) -> Option<usize> {
        if let Some(i) = self.claim_of(&claim) {
            return Some(i);
        }
        let clear = self_clearance(self);
        let best = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.claims.contains_key(i))
            .filter(|(_, s)| occupied.iter().all(|p| p.distance(s.position) >= clear))
            .min_by(|(ia, a), (ib, b)| {
                from.distance(a.position)
                    .total_cmp(&from.distance(b.position))
                    .then(ia.cmp(ib))
            })
            .map(|(i, _)| i)?;
        self.claims.insert(best, claim);
        Some(best)
    }
}

fn self_clearance(lot: &ParkingLot) -> f64 {
    if lot.slots.len() < 2 {
        return 0.9;
    }
    let d = lot.slots[0].position.distance(lot.slots[1].position);
    0.75 * d
}

/// Heading that parks a piece with its entry point facing into the room.
pub fn parking_pose(slot: &ParkingSlot, entry_local: &Pose) -> Pose {
    let entry_dir = Vector::new(entry_local.x, entry_local.y).angle();
    Pose::from_parts(slot.position, slot.inward - entry_dir)
}

/// Whether `pose` matches `target` within the placement tolerances.
pub fn within_tolerance(pose: &Pose, target: &Pose, params: &SchedulerParams) -> bool {
    pose.position().distance(target.position()) <= params.placement_tolerance
        && normalize_angle(pose.heading - target.heading).abs() <= params.placement_yaw_tolerance
}

fn priority(user: &UserAvatar, p: Vector, params: &SchedulerParams) -> f64 {
    user.pose.position().distance(p) / params.assumed_user_speed
}

/// Outcome of matching the required set against current bindings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diff {
    pub tasks: Vec<ProxyTask>,
    pub bindings: BTreeMap<ObjectId, ProxyBinding>,
    pub unmet: Vec<ObjectId>,
    /// Furniture released from a binding that should go to parking.
    pub to_park: Vec<FurnitureId>,
}

/// Reconciles bindings with the required set.
///
/// Kept bindings retarget when their object moved; required objects
/// without a binding get the nearest free furniture of the same kind,
/// including placed proxies that have left the user's reach. Bindings
/// whose object disappeared or stopped being required while not yet
/// placed release their furniture to parking. `park_released` sends
/// placed-but-unrequired proxies to parking as well (teleport).
pub fn diff_tasks(
    bindings: &BTreeMap<ObjectId, ProxyBinding>,
    required: &[RequiredProxy],
    pool: &[PoolEntry],
    user: &UserAvatar,
    params: &SchedulerParams,
    park_released: bool,
) -> Diff {
    let mut out = Diff::default();
    let req: BTreeMap<&ObjectId, &RequiredProxy> = required.iter().map(|r| (&r.object, r)).collect();
    let entry = |id: &FurnitureId| pool.iter().find(|p| &p.id == id);

    for (oid, b) in bindings {
        let Some(f) = entry(&b.furniture) else { continue };
        match req.get(oid) {
            Some(r) => {
                let mut nb = b.clone();
                let moved = !poses_equal(&b.target, &r.target);
                nb.target = r.target;
                if moved {
                    let kind = if r.sliding { TaskKind::SlideUpdate } else { TaskKind::Place };
                    if b.status == BindingStatus::Placed || b.status == BindingStatus::Releasing {
                        nb.status = BindingStatus::Pending;
                    }
                    out.tasks.push(ProxyTask {
                        furniture: b.furniture.clone(),
                        target: r.target,
                        priority: priority(user, r.target.position(), params),
                        kind,
                    });
                } else if b.status == BindingStatus::Releasing {
                    nb.status = BindingStatus::Placed;
                }
                out.bindings.insert(oid.clone(), nb);
            }
            None => {
                let placed = matches!(b.status, BindingStatus::Placed | BindingStatus::Releasing)
                    && !f.carried
                    && !f.busy;
                if placed && !park_released {
                    let mut nb = b.clone();
                    nb.status = BindingStatus::Releasing;
                    out.bindings.insert(oid.clone(), nb);
                } else {
                    out.to_park.push(b.furniture.clone());
                }
            }
        }
    }

    // unmet requirements, most urgent first
    let mut open: Vec<&RequiredProxy> = required.iter().filter(|r| !out.bindings.contains_key(&r.object)).collect();
    open.sort_by(|a, b| {
        priority(user, a.target.position(), params)
            .total_cmp(&priority(user, b.target.position(), params))
            .then(a.object.cmp(&b.object))
    });
    let mut taken: BTreeSet<FurnitureId> = out.bindings.values().filter(|b| b.status != BindingStatus::Releasing).map(|b| b.furniture.clone()).collect();
    for r in open {
        let candidate = pool
            .iter()
            .filter(|p| p.kind == r.kind && p.liftable && !taken.contains(&p.id))
            .min_by(|a, b| {
                a.pose
                    .position()
                    .distance(r.target.position())
                    .total_cmp(&b.pose.position().distance(r.target.position()))
                    .then(a.id.cmp(&b.id))
            });
        let Some(p) = candidate else {
            out.unmet.push(r.object.clone());
            continue;
        };
        taken.insert(p.id.clone());
        out.to_park.retain(|f| f != &p.id);
        // steal from a released binding
        let stolen: Vec<ObjectId> = out
            .bindings
            .iter()
            .filter(|(_, b)| b.furniture == p.id)
            .map(|(o, _)| o.clone())
            .collect();
        for o in stolen {
            out.bindings.remove(&o);
            out.tasks.push(ProxyTask {
                furniture: p.id.clone(),
                target: p.pose,
                priority: priority(user, p.pose.position(), params),
                kind: TaskKind::RemoveToParking,
            });
        }
        let placed_already = !p.carried && within_tolerance(&p.pose, &r.target, params);
        out.bindings.insert(
            r.object.clone(),
            ProxyBinding {
                object: r.object.clone(),
                furniture: p.id.clone(),
                target: r.target,
                status: if placed_already { BindingStatus::Placed } else { BindingStatus::Pending },
            },
        );
        if !placed_already {
            out.tasks.push(ProxyTask {
                furniture: p.id.clone(),
                target: r.target,
                priority: priority(user, r.target.position(), params),
                kind: if r.sliding { TaskKind::SlideUpdate } else { TaskKind::Place },
            });
        }
    }
    out.unmet.sort();
    out
}

fn poses_equal(a: &Pose, b: &Pose) -> bool {
    a.x == b.x && a.y == b.y && a.heading == b.heading
}

/// Result of a teleport: the new scene origin and the tasks that
/// reconfigure the room for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TeleportPlan {
    pub origin: Pose,
    pub required: Vec<RequiredProxy>,
    pub diff: Diff,
    /// Required objects whose target falls outside the play area and band.
    pub unrenderable: Vec<ObjectId>,
}

/// Scene origin that maps the user's physical pose onto `virtual_pose`.
pub fn teleport_origin(user_physical: &Pose, virtual_pose: &Pose) -> Pose {
    user_physical.compose(&virtual_pose.inverse())
}

/// Recomputes the scene transform so that the user's physical pose
/// corresponds to `new_virtual`, and plans the proxies for the new view.
#[allow(clippy::too_many_arguments)]
pub fn handle_teleport(
    scene: &VirtualScene,
    user: &UserAvatar,
    new_virtual: &Pose,
    bindings: &BTreeMap<ObjectId, ProxyBinding>,
    pool: &[PoolEntry],
    area: &PlayArea,
    extra_required: &[ObjectId],
    params: &SchedulerParams,
) -> TeleportPlan {
    let origin = teleport_origin(&user.pose, new_virtual);
    let mut moved = scene.clone();
    moved.origin = origin;
    let required = required_with_extra(&moved, user, extra_required);
    let unrenderable = required
        .iter()
        .filter(|r| !area.contains_with_margin(r.target.position()))
        .map(|r| r.object.clone())
        .collect::<Vec<_>>();
    let renderable: Vec<RequiredProxy> =
        required.iter().filter(|r| !unrenderable.contains(&r.object)).cloned().collect();
    let diff = diff_tasks(bindings, &renderable, pool, user, params, true);
    TeleportPlan { origin, required, diff, unrenderable }
}

/// Required set plus explicitly highlighted objects.
pub fn required_with_extra(scene: &VirtualScene, user: &UserAvatar, extra: &[ObjectId]) -> Vec<RequiredProxy> {
    let mut req = required_proxies(scene, user);
    for id in extra {
        if req.iter().any(|r| &r.object == id) {
            continue;
        }
        if let Some(o) = scene.get(id) {
            if o.touchable {
                req.push(required_entry(scene, o, user));
            }
        }
    }
    req.sort_by(|a, b| a.object.cmp(&b.object));
    req
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EditError {
    #[error("unknown object")]
    UnknownObject(ObjectId),
}

/// Moves a virtual object. Bound proxies pick up the new target on the
/// next scheduler pass.
pub fn handle_virtual_move(scene: &mut VirtualScene, id: &ObjectId, pose: Pose) -> Result<(), EditError> {
    let obj = scene.get_mut(id).ok_or_else(|| EditError::UnknownObject(id.clone()))?;
    obj.pose = pose;
    Ok(())
}

/// Edit received from a remote site, ordered by server sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEdit {
    pub seq: u64,
    pub object: ObjectId,
    pub pose: Pose,
}

/// Last-writer-wins filter for remote edits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RemoteMirror {
    pub last_seq: BTreeMap<ObjectId, u64>,
}

impl RemoteMirror {
    /// Applies the edit unless an edit with a newer or equal sequence
    /// number already touched the object. Returns whether it applied.
    pub fn mirror_remote_edit(&mut self, scene: &mut VirtualScene, edit: &RemoteEdit) -> Result<bool, EditError> {
        if let Some(&last) = self.last_seq.get(&edit.object) {
            if edit.seq <= last {
                return Ok(false);
            }
        }
        handle_virtual_move(scene, &edit.object, edit.pose)?;
        self.last_seq.insert(edit.object.clone(), edit.seq);
        Ok(true)
    }
}

/// Scheduler state carried between control ticks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scheduler {
    pub params: SchedulerParams,
    pub bindings: BTreeMap<ObjectId, ProxyBinding>,
    pub highlighted: Option<ObjectId>,
    pub required: Vec<RequiredProxy>,
    pub unmet: Vec<ObjectId>,
    pub mirror: RemoteMirror,
}

impl Scheduler {
    pub fn new(params: SchedulerParams) -> Self {
        Self { params, ..Self::default() }
    }

    pub fn extra(&self) -> Vec<ObjectId> {
        self.highlighted.iter().cloned().collect()
    }

    /// One scheduler pass: recompute the required set and return new or
    /// changed tasks plus furniture to send to parking.
    pub fn update(&mut self, scene: &VirtualScene, user: &UserAvatar, pool: &[PoolEntry]) -> Diff {
        let required = required_with_extra(scene, user, &self.extra());
        let diff = diff_tasks(&self.bindings, &required, pool, user, &self.params, false);
        self.apply(required, &diff);
        diff
    }

    pub fn apply(&mut self, required: Vec<RequiredProxy>, diff: &Diff) {
        self.required = required;
        self.bindings = diff.bindings.clone();
        self.unmet = diff.unmet.clone();
    }

    /// Refreshes binding statuses from the physical state.
    pub fn refresh_status(&mut self, pool: &[PoolEntry], assigned: &BTreeSet<FurnitureId>) {
        let params = self.params;
        for b in self.bindings.values_mut() {
            let Some(f) = pool.iter().find(|p| p.id == b.furniture) else { continue };
            if b.status == BindingStatus::Releasing {
                continue;
            }
            b.status = if !f.carried && !f.busy && within_tolerance(&f.pose, &b.target, &params) {
                BindingStatus::Placed
            } else if assigned.contains(&b.furniture) {
                BindingStatus::Enroute
            } else {
                BindingStatus::Pending
            };
        }
    }

    pub fn binding_for_furniture(&self, f: &FurnitureId) -> Option<&ProxyBinding> {
        self.bindings.values().find(|b| &b.furniture == f)
    }
}
