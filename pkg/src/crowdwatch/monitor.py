"""Breach timing, grouping, lock selection, goal computation and camera arbitration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

from .geometry import Frame2, Point2
from .perception import Frame, LocalizedPedestrian, PairDistance, Source, pairwise_distances
from .sensors import BoundingBox, CctvCameraModel

SIX_FEET = 1.8288
TIME_EPS = 1e-9


class MonitorError(RuntimeError):
    pass


class TimeRegression(MonitorError):
    pass


class SelfPair(MonitorError):
    pass


class NoVisibleMember(MonitorError):
    pass


class Phase(str, Enum):
    IDLE = "Idle"
    NAVIGATING = "Navigating"
    ATTENDING = "Attending"
    LAWNMOWER = "Lawnmower"


@dataclass(frozen=True)
class MonitorConfig:
    distance_threshold: float = SIX_FEET
    breach_duration: float = 5.0
    compliance_duration: float = 3.0
    lock_hysteresis: float = 0.10
    lock_timeout: float = 1.0
    standoff: float = 2.0
    hold_timer_on_dropout: bool = False

    def __post_init__(self):
        for name in ("distance_threshold", "breach_duration", "compliance_duration", "lock_timeout", "standoff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lock_hysteresis < 0:
            raise ValueError("lock_hysteresis must be non-negative")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    data: Mapping = field(default_factory=dict)

    def record(self) -> dict:
        return {"t": round(self.t, 3), "event": self.kind, **self.data}


# --- breach timers ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairTimer:
    pair: tuple
    below_since: Optional[float] = None
    breached: bool = False


@dataclass(frozen=True)
class BreachEvent:
    pair: tuple
    t_start: float
    t_confirmed: float
    source: Source
    resolved_at: Optional[float] = None


@dataclass(frozen=True)
class TimerTable:
    """Per-pair timers for one camera plus the time of the last update."""

    timers: Mapping = field(default_factory=dict)
    t: Optional[float] = None

    def __getitem__(self, pair) -> PairTimer:
        return self.timers[pair]

    def __contains__(self, pair) -> bool:
        return pair in self.timers

    def without(self, pairs: Iterable) -> TimerTable:
        drop = set(pairs)
        return TimerTable({k: v for k, v in self.timers.items() if k not in drop}, self.t)


def update_pair_timers(timers: TimerTable, distances: Sequence[PairDistance], t: float,
                       cfg: MonitorConfig, source: Source = Source.RGBD):
    """Advance every pair timer to time ``t``.

    A pair's timer starts on the first frame below the threshold and is cleared on any
    frame at or above it. A pair missing from ``distances`` is cleared as well unless
    ``cfg.hold_timer_on_dropout``. Exactly one BreachEvent is emitted per continuous
    below-threshold span once it reaches ``cfg.breach_duration``.
    """
    if timers.t is not None and t < timers.t - TIME_EPS:
        raise TimeRegression(f"time went backwards: {t} < {timers.t}")
    seen = {}
    for d in distances:
        seen[d.pair] = d.distance
    out = {}
    events = []
    for pair, dist in seen.items():
        prev = timers.timers.get(pair, PairTimer(pair))
        if dist >= cfg.distance_threshold:
            continue
        since = prev.below_since if prev.below_since is not None else t
        breached = prev.breached
        if not breached and t - since >= cfg.breach_duration - TIME_EPS:
            breached = True
            events.append(BreachEvent(pair, since, since + cfg.breach_duration, source))
        out[pair] = PairTimer(pair, since, breached)
    if cfg.hold_timer_on_dropout:
        for pair, timer in timers.timers.items():
            if pair not in seen:
                out[pair] = timer
    return TimerTable(out, t), events


# --- grouping --------------------------------------------------------------------------------

@dataclass(frozen=True)
class Group:
    member_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "member_ids", frozenset(self.member_ids))
        if len(self.member_ids) < 2:
            raise ValueError("a group needs at least two members")

    @property
    def size(self) -> int:
        return len(self.member_ids)

    def sort_key(self):
        return (-self.size, min(self.member_ids))

    def overlaps(self, other: Group) -> bool:
        return not self.member_ids.isdisjoint(other.member_ids)

    def pairs(self):
        return list(combinations(sorted(self.member_ids), 2))


def _check_pairs(pairs):
    out = []
    for a, b in pairs:
        if a == b:
            raise SelfPair(f"pair ({a}, {b}) repeats an id")
        out.append((a, b))
    return out


def _components(pairs) -> list:
    parent: dict = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for a, b in pairs:
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    comps: dict = {}
    for x in parent:
        comps.setdefault(find(x), set()).add(x)
    return list(comps.values())


def _literal_single_pass(pairs) -> list:
    # order-dependent single pass: a pair joins every group it touches and groups never merge
    grp = [set(pairs[0])]
    for pair in pairs[1:]:
        counter = 0
        for g in grp:
            if g & set(pair):
                g |= set(pair)
            else:
                counter += 1
        if counter == len(grp):
            grp.append(set(pair))
    return grp


def classify_groups(non_compliant_pairs: Sequence, literal: bool = False) -> list:
    """Groups of people transitively linked by non-compliant pairs, largest first.

    Ties are ordered by smallest member ID. ``literal=True`` runs the single-pass list
    procedure instead, which depends on pair order and may return overlapping groups;
    it exists to document that behaviour in tests.
    """
    pairs = _check_pairs(non_compliant_pairs)
    if not pairs:
        return []
    comps = _literal_single_pass(pairs) if literal else _components(pairs)
    groups = [Group(frozenset(c)) for c in comps]
    return sorted(groups, key=Group.sort_key)


# --- locking and goals -----------------------------------------------------------------------

def select_locked(group: Group, boxes: Sequence[BoundingBox], image_width: float,
                  prev_lock: Optional[int] = None, hysteresis: float = 0.10) -> int:
    """Member whose box centroid is laterally closest to the image centre.

    A previous lock that is still visible is kept unless the best candidate is more than
    ``hysteresis * image_width`` pixels closer to the centre.
    """
    half = image_width / 2.0
    offsets = {b.ped_id: abs(b.centroid.x - half) for b in boxes if b.ped_id in group.member_ids}
    if not offsets:
        raise NoVisibleMember(f"no member of {sorted(group.member_ids)} is visible")
    best = min(offsets, key=lambda pid: (offsets[pid], pid))
    if hysteresis > 0 and prev_lock in offsets:
        if offsets[prev_lock] - offsets[best] <= hysteresis * image_width:
            return prev_lock
    return best


def goal_from_rgbd(lp: LocalizedPedestrian) -> Point2:
    if lp.source != Source.RGBD or lp.frame != Frame.ROBOT:
        raise ValueError("goal_from_rgbd needs a robot-frame RGB-D localization")
    return lp.position


def goal_from_cctv(lp: LocalizedPedestrian, cam: CctvCameraModel, robot_map_pose: Frame2) -> Point2:
    """Robot-frame goal: the lock's map position minus the robot's, rotated into the robot frame."""
    if lp.source != Source.CCTV:
        raise ValueError("goal_from_cctv needs a CCTV localization")
    p_map = cam.gnd_to_map.apply(lp.position) if lp.frame == Frame.GND else lp.position
    diff = p_map - robot_map_pose.translation
    c, s = math.cos(robot_map_pose.rotation), math.sin(robot_map_pose.rotation)
    return Point2(c * diff.x + s * diff.y, -s * diff.x + c * diff.y)


# --- arbitration -----------------------------------------------------------------------------

@dataclass(frozen=True)
class PursuitState:
    groups: tuple = ()
    active: Optional[Group] = None
    locked_id: Optional[int] = None
    goal: Optional[Point2] = None
    goal_source: Optional[Source] = None
    phase: Phase = Phase.LAWNMOWER


def merge_groups(*group_lists: Sequence[Group]) -> list:
    """Union groups from several cameras; groups sharing any member are the same group."""
    pairs = []
    for groups in group_lists:
        for g in groups:
            members = sorted(g.member_ids)
            pairs.extend((members[0], m) for m in members[1:])
    return classify_groups(pairs)


def arbitrate(rgbd_groups: Sequence[Group], cctv_groups: Sequence[Group], state: PursuitState,
              rgbd_visible: Optional[Iterable[int]] = None,
              cctv_visible: Optional[Iterable[int]] = None) -> PursuitState:
    """Choose the group to attend and which camera supplies its goal.

    Resolved groups must already be absent from the inputs. The largest group wins (the
    current one on a size tie); CCTV is preferred whenever it sees a member. Visibility
    defaults to the members of each camera's own groups.
    """
    merged = merge_groups(rgbd_groups, cctv_groups)
    if not merged:
        return PursuitState(phase=Phase.LAWNMOWER)
    if rgbd_visible is None:
        rgbd_visible = {m for g in rgbd_groups for m in g.member_ids}
    if cctv_visible is None:
        cctv_visible = {m for g in cctv_groups for m in g.member_ids}
    rgbd_visible, cctv_visible = set(rgbd_visible), set(cctv_visible)
    target = merged[0]
    if state.active is not None:
        for g in merged:
            if g.overlaps(state.active) and g.size == target.size:
                target = g
                break
    if target.member_ids & cctv_visible:
        source = Source.CCTV
    elif target.member_ids & rgbd_visible:
        source = Source.RGBD
    else:
        source = None
    same = state.active is not None and target.overlaps(state.active)
    phase = state.phase if same and state.phase in (Phase.NAVIGATING, Phase.ATTENDING) else Phase.NAVIGATING
    locked = state.locked_id if same and state.locked_id in target.member_ids else None
    return PursuitState(tuple(merged), target, locked, state.goal if same else None, source, phase)


# --- sequential monitor ----------------------------------------------------------------------

@dataclass
class Observation:
    """One camera's output for a frame, already localized."""

    source: Source
    boxes: list
    localized: dict  # ped_id -> LocalizedPedestrian
    image_width: int
    map_positions: dict = field(default_factory=dict)  # ped_id -> Point2 (map frame)


class TrackHistory:
    """Differenced map-frame velocities per pedestrian ID."""

    def __init__(self):
        self._last: dict = {}
        self.velocities: dict = {}

    def update(self, t: float, positions: Mapping) -> dict:
        vel = {}
        for pid, p in positions.items():
            prev = self._last.get(pid)
            if prev is not None and t > prev[0] + TIME_EPS:
                dt = t - prev[0]
                vel[pid] = Point2((p.x - prev[1].x) / dt, (p.y - prev[1].y) / dt)
            else:
                vel[pid] = Point2(0.0, 0.0)
        self._last = {pid: (t, p) for pid, p in positions.items()}
        self.velocities = vel
        return vel


class Monitor:
    """Sequential state machine fed one time-ordered frame at a time."""

    def __init__(self, cfg: MonitorConfig = MonitorConfig(), cctv_cam: Optional[CctvCameraModel] = None):
        self.cfg = cfg
        self.cctv_cam = cctv_cam
        self.timers = {Source.RGBD: TimerTable(), Source.CCTV: TimerTable()}
        self.confirmed = {Source.RGBD: set(), Source.CCTV: set()}
        self.state = PursuitState()
        self.t: Optional[float] = None
        self.known_groups: set = set()
        self.compliant_since: dict = {}
        self.alerted = False
        self.last_seen: Optional[float] = None
        self.last_goal_map: Optional[Point2] = None
        self.events: list = []

    def _emit(self, t, kind, **data):
        self.events.append(Event(t, kind, data))

    def _drop_group(self, group: Group):
        pairs = set(group.pairs())
        for src in self.confirmed:
            self.confirmed[src] -= pairs
            self.timers[src] = self.timers[src].without(pairs)
        self.compliant_since.pop(group.member_ids, None)
        self.known_groups.discard(group.member_ids)

    def _groups(self, src: Source) -> list:
        return classify_groups(sorted(self.confirmed[src]))

    def update(self, t: float, robot_pose: Frame2, observations: Sequence[Observation]):
        """Process one frame; returns the new PursuitState and the events it produced."""
        if self.t is not None and t < self.t - TIME_EPS:
            raise TimeRegression(f"time went backwards: {t} < {self.t}")
        self.t = t
        self.events = []
        cfg = self.cfg
        obs = {o.source: o for o in observations}
        latest: dict = {}
        for src in (Source.RGBD, Source.CCTV):
            o = obs.get(src)
            if o is None:
                continue
            dists = pairwise_distances(list(o.localized.values()))
            for d in dists:
                latest.setdefault(src, {})[d.pair] = d.distance
            self.timers[src], new = update_pair_timers(self.timers[src], dists, t, cfg, src)
            for ev in new:
                self.confirmed[src].add(ev.pair)
                self._emit(t, "BreachConfirmed", pair=list(ev.pair), source=src.value,
                           t_start=round(ev.t_start, 3), t_confirmed=round(ev.t_confirmed, 3))

        # resolution: every member pair seen and compliant for the compliance duration
        all_pairs = sorted(self.confirmed[Source.RGBD] | self.confirmed[Source.CCTV])
        for g in classify_groups(all_pairs):
            compliant = True
            for pair in g.pairs():
                d = latest.get(Source.CCTV, {}).get(pair, latest.get(Source.RGBD, {}).get(pair))
                if d is None or d < cfg.distance_threshold:
                    compliant = False
                    break
            key = g.member_ids
            if not compliant:
                self.compliant_since.pop(key, None)
                continue
            since = self.compliant_since.setdefault(key, t)
            if t - since >= cfg.compliance_duration - TIME_EPS:
                self._emit(t, "GroupResolved", members=sorted(key),
                           attended=bool(self.state.active is not None and self.state.active.overlaps(g)))
                if self.state.active is not None and self.state.active.overlaps(g):
                    self.state = replace(self.state, active=None, locked_id=None, goal=None)
                    self.alerted = False
                self._drop_group(g)

        rgbd_groups = self._groups(Source.RGBD)
        cctv_groups = self._groups(Source.CCTV)
        for g in merge_groups(rgbd_groups, cctv_groups):
            if g.member_ids not in self.known_groups:
                self.known_groups.add(g.member_ids)
                self._emit(t, "GroupFormed", members=sorted(g.member_ids))

        prev = self.state
        vis_r = set(obs[Source.RGBD].localized) if Source.RGBD in obs else set()
        vis_c = set(obs[Source.CCTV].localized) if Source.CCTV in obs else set()
        state = arbitrate(rgbd_groups, cctv_groups, prev, vis_r, vis_c)
        if state.active is not None and (prev.active is None or not state.active.overlaps(prev.active)):
            self.alerted = False
            self.last_seen = t
            self.last_goal_map = None

        if state.active is not None:
            state = self._pursuit(t, robot_pose, state, prev, obs)
        if state.active is None and prev.active is not None and state.phase != Phase.LAWNMOWER:
            state = replace(state, phase=Phase.LAWNMOWER)
        if state.phase != prev.phase:
            self._emit(t, "PhaseChanged", old=prev.phase.value, new=state.phase.value)
        self.state = state
        return state, self.events

    def _pursuit(self, t, robot_pose, state: PursuitState, prev: PursuitState, obs) -> PursuitState:
        cfg = self.cfg
        group = state.active
        src = state.goal_source
        if src is None:
            if self.last_seen is not None and t - self.last_seen > cfg.lock_timeout + TIME_EPS:
                self._emit(t, "LockLost", members=sorted(group.member_ids), lock=prev.locked_id,
                           last_seen=round(self.last_seen, 3))
                self._drop_group(group)
                self.alerted = False
                rest = arbitrate(self._groups(Source.RGBD), self._groups(Source.CCTV),
                                 PursuitState(), set(), set())
                if rest.active is None:
                    return PursuitState(phase=Phase.LAWNMOWER)
                self.last_seen = t
                return rest
            goal = robot_pose.to_local(self.last_goal_map) if self.last_goal_map is not None else None
            return replace(state, goal=goal)
        self.last_seen = t
        o = obs[src]
        prev_lock = prev.locked_id if prev.goal_source == src else None
        lock = select_locked(group, o.boxes, o.image_width, prev_lock, cfg.lock_hysteresis)
        if lock != prev.locked_id:
            self._emit(t, "LockChanged", old=prev.locked_id, new=lock, source=src.value)
        if src != prev.goal_source and prev.active is not None and prev.goal_source is not None:
            self._emit(t, "GoalSourceChanged", old=prev.goal_source.value, new=src.value,
                       members=sorted(group.member_ids))
        lp = o.localized[lock]
        goal = goal_from_cctv(lp, self.cctv_cam, robot_pose) if src == Source.CCTV else goal_from_rgbd(lp)
        self.last_goal_map = robot_pose.apply(goal)
        phase = Phase.ATTENDING if goal.norm() <= cfg.standoff else Phase.NAVIGATING
        if phase == Phase.ATTENDING and not self.alerted:
            self.alerted = True
            dists = [lp_dist for lp_dist in self._member_distances(group, o)]
            self._emit(t, "AlertIssued", members=sorted(group.member_ids), lock=lock, source=src.value,
                       min_distance=round(min(dists), 3) if dists else None)
        return replace(state, locked_id=lock, goal=goal, phase=phase)

    @staticmethod
    def _member_distances(group: Group, o: Observation):
        members = [o.localized[m] for m in sorted(group.member_ids) if m in o.localized]
        return [a.position.distance_to(b.position) for a, b in combinations(members, 2)]
