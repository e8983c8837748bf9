"""Lockstep multi-rank advection simulator.

Ranks are simulated within one process. Each round runs the kernel stages in
order -- balance distribute, round info, allocate, integrate, balance
collect, out-of-bounds distribute -- with all cross-rank traffic flowing
through per-channel mailboxes that are delivered only at the barrier between
stages. Message processing is keyed by the receiver's neighborhood direction
order, never by rank execution order, so any execution order produces
identical results (the sequential order used here is the reference).

Loans are per-round ephemeral: every surviving loaned particle (out of
bounds or not yet integrated) returns to its home rank at collect, before
out-of-bounds routing. Loaned particles that terminate at the borrowing rank
die there and are only reported back for bookkeeping.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import balance
from .advect import (
    STATUS_EXITED,
    STATUS_OOB,
    STATUS_TERMINATED,
    CurveStore,
    compute_round_info,
    integrate,
    merge_curves,
)
from .errors import ConfigError, InvariantError, RoundLimitError
from .field import AnalyticField, Block, rasterize_block, rasterize_global
from .metrics import RoundRecord, lif
from .particles import ParticleSet, concat_particles
from .topology import (
    Neighborhood,
    ProcessGrid,
    decompose,
    neighborhood_of,
    route_out_of_bounds,
)

ROUND_CAP = 100_000

# Collect-stage particle fates (0 marks a loan that was never integrated).
_COLLECT_ACTIVE = 0


@dataclass
class RankState:
    rank: int
    neighborhood: Neighborhood
    own_block: Block
    replicas: dict
    queue: ParticleSet
    store: CurveStore = dc_field(default_factory=CurveStore)
    loaned_out: dict = dc_field(default_factory=dict)
    terminated: int = 0
    exited: int = 0

    def __post_init__(self):
        self._oob: list = []  # (ParticleSet, dirs) awaiting distribution

    def donor_direction(self, donor_rank: int) -> int:
        for d, r in self.neighborhood.neighbors:
            if r == donor_rank:
                return d
        raise InvariantError(f"rank {self.rank} holds a loan from non-neighbor {donor_rank}")


class Mailbox:
    """Per-round message store with barrier delivery semantics.

    Messages are posted as ``(sender, receiver, channel, payload)`` and read
    back per receiver keyed by sender; readers iterate their neighborhood in
    direction order, which fixes processing order independent of execution
    order.
    """

    def __init__(self):
        self._mail: dict = {}

    def post(self, sender: int, receiver: int, channel: str, payload) -> None:
        key = (receiver, channel)
        box = self._mail.setdefault(key, {})
        if sender in box:
            raise InvariantError(f"duplicate message {channel} from {sender} to {receiver}")
        box[sender] = payload

    def take(self, receiver: int, channel: str, sender: int, default=None):
        box = self._mail.get((receiver, channel))
        if box is None:
            return default
        return box.pop(sender, default)


@dataclass
class RunResult:
    scheduler: str
    grid_dims: tuple
    seed_count: int
    rounds: int
    terminated: int
    exited: int
    records: list
    lif_rows: list          # (round, lif_load, lif_steps)
    round_totals: list      # (round, active, terminated, exited)
    curves: dict | None

    @property
    def node_count(self) -> int:
        d = self.grid_dims
        return d[0] * d[1] * d[2]

    def lockstep_integrate_steps(self) -> int:
        by_round: dict[int, int] = {}
        for r in self.records:
            by_round[r.round] = max(by_round.get(r.round, 0), r.integrate_steps)
        return sum(by_round.values())

    def total_integrate_steps(self) -> int:
        return sum(r.integrate_steps for r in self.records)


def seed_particles(resolution, aabb_scale: float, stride, extents, grid: ProcessGrid,
                   max_iterations: int) -> tuple[list[ParticleSet], int]:
    """Seed particles on the global voxel lattice inside a centered box.

    Every ``stride``-th lattice node per axis (anchored at node 0) whose
    position falls inside the axis-aligned box of side ``aabb_scale``
    centered at 0.5 becomes a seed. Ids count x-fastest in lattice order;
    each seed starts on the rank whose core extent contains its node.
    """
    if not (0.0 < aabb_scale <= 1.0):
        raise ConfigError(f"aabb scale must be in (0, 1], got {aabb_scale}")
    stride = tuple(int(s) for s in stride)
    if len(stride) != 3 or any(s < 1 for s in stride):
        raise ConfigError(f"stride must be three integers >= 1, got {stride}")
    res = tuple(int(r) for r in resolution)
    spacing = 1.0 / (np.asarray(res, dtype=np.float64) - 1.0)
    lo, hi = 0.5 - aabb_scale / 2.0, 0.5 + aabb_scale / 2.0
    axes = []
    for a in range(3):
        idx = np.arange(0, res[a], stride[a], dtype=np.int64)
        pos = idx * spacing[a]
        axes.append(idx[(pos >= lo) & (pos <= hi)])
    iz, iy, ix = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    total = ix.shape[0]
    ids = np.arange(total, dtype=np.int64)
    pos = np.stack([ix * spacing[0], iy * spacing[1], iz * spacing[2]], axis=1)
    # Map lattice node -> owning block per axis via the split starts.
    starts = []
    for a in range(3):
        axis_starts = sorted({e.origin[a] for e in extents})
        starts.append(np.asarray(axis_starts, dtype=np.int64))
    bx = np.searchsorted(starts[0], ix, side="right") - 1
    by = np.searchsorted(starts[1], iy, side="right") - 1
    bz = np.searchsorted(starts[2], iz, side="right") - 1
    dx, dy, _ = grid.dims
    ranks = (bz * dy + by) * dx + bx
    per_rank = []
    for r in range(grid.rank_count):
        sel = np.nonzero(ranks == r)[0]
        per_rank.append(ParticleSet.make(
            ids=ids[sel],
            pos=pos[sel],
            remaining=np.full(sel.shape[0], int(max_iterations), dtype=np.int64),
            home=np.full(sel.shape[0], r, dtype=np.int64),
        ))
    return per_rank, total


def check_completion(states: list[RankState]) -> bool:
    """Global completion: true only when every rank's queue is empty."""
    return all(len(s.queue) == 0 for s in states)


class Simulator:
    """Drives the full advection loop over virtual ranks."""

    def __init__(
        self,
        field: AnalyticField,
        resolution,
        grid_dims,
        scheduler: str,
        *,
        step: float = 0.001,
        max_iterations: int = 1000,
        particles_per_round: int = 50_000,
        aabb_scale: float = 1.0,
        stride=(8, 8, 8),
        alpha: float | None = None,
        collect_curves: bool = True,
        rank_order=None,
        round_cap: int = ROUND_CAP,
    ):
        if scheduler not in balance.SCHEDULERS:
            raise ConfigError(f"unknown scheduler {scheduler!r}; expected one of {balance.SCHEDULERS}")
        if step <= 0.0:
            raise ConfigError(f"step size must be positive, got {step}")
        if max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {max_iterations}")
        if particles_per_round < 1:
            raise ConfigError(f"particles_per_round must be >= 1, got {particles_per_round}")
        self.field = field
        self.resolution = tuple(int(r) for r in resolution)
        self.grid = ProcessGrid(tuple(grid_dims))
        self.scheduler = scheduler
        self.h = float(step)
        self.max_iterations = int(max_iterations)
        self.ppr = int(particles_per_round)
        self.alpha = alpha
        self.collect_curves = collect_curves
        self.round_cap = int(round_cap)
        self.rank_order = list(range(self.grid.rank_count)) if rank_order is None else list(rank_order)
        if sorted(self.rank_order) != list(range(self.grid.rank_count)):
            raise ConfigError("rank_order must be a permutation of all ranks")

        global_data = rasterize_global(field, self.resolution)
        spacing = 1.0 / (np.asarray(self.resolution, dtype=np.float64) - 1.0)
        # Stage points must stay within one ghost cell of the core region,
        # otherwise a handed-off step may be computable by no rank.
        cmax = float(np.abs(global_data).max())
        if 2.0 * self.h * cmax > float(spacing.min()):
            raise ConfigError(
                f"step {self.h} too large for ghost margin: 2*h*max|v| = {2 * self.h * cmax:.3g} "
                f"exceeds min spacing {spacing.min():.3g}"
            )
        extents = decompose(self.grid, self.resolution)
        blocks = [
            rasterize_block(field, self.resolution, e.origin, e.core_dims, global_data=global_data)
            for e in extents
        ]
        self.states: list[RankState] = []
        for rank in range(self.grid.rank_count):
            neigh = neighborhood_of(self.grid, rank)
            replicas = {d: blocks[r] for d, r in neigh.neighbors}
            self.states.append(RankState(
                rank=rank,
                neighborhood=neigh,
                own_block=blocks[rank],
                replicas=replicas,
                queue=ParticleSet.empty(),
            ))
        seeds, self.seed_count = seed_particles(
            self.resolution, aabb_scale, stride, extents, self.grid, self.max_iterations
        )
        for rank, pset in enumerate(seeds):
            self.states[rank].queue = pset
        self.records: list[RoundRecord] = []
        self.lif_rows: list = []
        self.round_totals: list = []

    # -- helpers ---------------------------------------------------------

    def _assert_containable(self) -> None:
        for st in self.states:
            q = st.queue
            if len(q) == 0:
                continue
            home_rows = q.loaned_from < 0
            if home_rows.any():
                ok = st.own_block.samplable_mask(q.pos[home_rows])
                if not ok.all():
                    raise InvariantError(f"rank {st.rank}: home particle outside its block's reach")
            for donor in np.unique(q.loaned_from[~home_rows]) if (~home_rows).any() else []:
                d = st.donor_direction(int(donor))
                rows = q.loaned_from == donor
                if not st.replicas[d].samplable_mask(q.pos[rows]).all():
                    raise InvariantError(f"rank {st.rank}: loaned particle outside donor replica's reach")

    def _conservation_check(self, round_index: int) -> None:
        active = sum(len(s.queue) for s in self.states)
        terminated = sum(s.terminated for s in self.states)
        exited = sum(s.exited for s in self.states)
        if active + terminated + exited != self.seed_count:
            raise InvariantError(
                f"round {round_index}: {active} active + {terminated} terminated + "
                f"{exited} exited != {self.seed_count} seeds"
            )
        self.round_totals.append((round_index, active, terminated, exited))

    # -- the kernel ------------------------------------------------------

    def run_round(self, round_index: int) -> list[RoundRecord]:
        states = self.states
        order = self.rank_order
        mail = Mailbox()
        recs = {s.rank: RoundRecord(round=round_index, rank=s.rank, load_pre=len(s.queue)) for s in states}
        self._assert_containable()

        # Stage 1: balance distribute (load exchange, quota exchange, transfer).
        loads = {s.rank: len(s.queue) for s in states}
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            for d, j in st.neighborhood.neighbors:
                mail.post(st.rank, j, "loads", loads[st.rank])
            recs[r].stage_lb_distribute_s += time.perf_counter() - t0
        neighbor_loads = {}
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            neighbor_loads[r] = tuple(
                mail.take(st.rank, "loads", j) for _, j in st.neighborhood.neighbors
            )
            recs[r].stage_lb_distribute_s += time.perf_counter() - t0
        granted = {r: None for r in range(len(states))}
        if self.scheduler == "gllma":
            for r in order:
                st = states[r]
                t0 = time.perf_counter()
                lv = balance.LoadVector(loads[r], neighbor_loads[r])
                offer = balance.quota_offer(lv)
                for (d, j), q in zip(st.neighborhood.neighbors, offer):
                    mail.post(st.rank, j, "quotas", q)
                recs[r].stage_lb_distribute_s += time.perf_counter() - t0
            for r in order:
                st = states[r]
                t0 = time.perf_counter()
                granted[r] = tuple(
                    mail.take(st.rank, "quotas", j, 0) for _, j in st.neighborhood.neighbors
                )
                recs[r].stage_lb_distribute_s += time.perf_counter() - t0
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            lv = balance.LoadVector(loads[r], neighbor_loads[r])
            decision = balance.decide(self.scheduler, lv, granted_quotas=granted[r], alpha=self.alpha)
            kept, sends = balance.select_particles(st.queue, decision, st.rank)
            st.queue = kept
            for (d, j), part in zip(st.neighborhood.neighbors, sends):
                st.loaned_out[d] = part.ids.copy()
                if len(part):
                    mail.post(st.rank, j, "balanced", part)
            recs[r].sent_balanced = sum(len(p) for p in sends)
            recs[r].stage_lb_distribute_s += time.perf_counter() - t0
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            arrivals = []
            for d, j in st.neighborhood.neighbors:
                part = mail.take(st.rank, "balanced", j)
                if part is not None:
                    arrivals.append(part)
            if arrivals:
                st.queue = concat_particles([st.queue] + arrivals)
                recs[r].recv_balanced = sum(len(p) for p in arrivals)
            recs[r].load_post = len(st.queue)
            recs[r].stage_lb_distribute_s += time.perf_counter() - t0

        # Stages 2-4: round info, allocation, integration.
        selected = {}
        outcomes = {}
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            info = compute_round_info(st.queue, self.ppr)
            recs[r].stage_round_info_s += time.perf_counter() - t0
            t0 = time.perf_counter()
            buf = st.store.allocate(info)
            recs[r].stage_alloc_s += time.perf_counter() - t0
            t0 = time.perf_counter()
            sel = st.queue.select(np.arange(info.count))
            st.queue = st.queue.select(np.arange(info.count, len(st.queue)))
            groups = []
            home_rows = np.nonzero(sel.loaned_from < 0)[0]
            if home_rows.size:
                groups.append((st.own_block, sel.select(home_rows), home_rows))
            if (sel.loaned_from >= 0).any():
                for donor in np.unique(sel.loaned_from[sel.loaned_from >= 0]):
                    d = st.donor_direction(int(donor))
                    rows = np.nonzero(sel.loaned_from == donor)[0]
                    groups.append((st.replicas[d], sel.select(rows), rows))
            outcome, work = integrate(groups, info, buf, self.h)
            st.store.finish_round(round_index, sel.ids, info, buf)
            recs[r].integrate_steps = work
            selected[r] = sel
            outcomes[r] = outcome
            recs[r].stage_integrate_s += time.perf_counter() - t0

        # Stage 4 bookkeeping: apply outcomes to home particles; loans wait
        # for collect. Positions/budgets in `sel` are updated in place.
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            sel, out = selected[r], outcomes[r]
            sel.pos[:] = out.pos
            sel.remaining[:] = out.remaining
            home = sel.loaned_from < 0
            st.terminated += int(np.count_nonzero(out.status == STATUS_TERMINATED))
            st.exited += int(np.count_nonzero(out.status == STATUS_EXITED))
            oob_home = home & (out.status == STATUS_OOB)
            if oob_home.any():
                rows = np.nonzero(oob_home)[0]
                st._oob.append((sel.select(rows), out.exit_dir[rows].copy()))
            recs[r].stage_integrate_s += time.perf_counter() - t0

        # Stage 5: collect -- every surviving loan returns to its donor.
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            sel, out = selected[r], outcomes[r]
            loan_rows = np.nonzero(sel.loaned_from >= 0)[0]
            queue_loans = np.nonzero(st.queue.loaned_from >= 0)[0]
            by_donor: dict[int, list] = {}
            for rows_src, src, statuses, dirs in (
                (loan_rows, sel, out.status[loan_rows], out.exit_dir[loan_rows]),
                (queue_loans, st.queue,
                 np.full(queue_loans.shape[0], _COLLECT_ACTIVE, dtype=np.int64),
                 np.full(queue_loans.shape[0], -1, dtype=np.int64)),
            ):
                if rows_src.size == 0:
                    continue
                part = src.select(rows_src)
                for donor in np.unique(part.loaned_from):
                    m = part.loaned_from == donor
                    by_donor.setdefault(int(donor), []).append(
                        (part.select(np.nonzero(m)[0]), statuses[m], dirs[m])
                    )
            if queue_loans.size:
                keep = np.ones(len(st.queue), dtype=bool)
                keep[queue_loans] = False
                st.queue = st.queue.select(np.nonzero(keep)[0])
            for donor, chunks in by_donor.items():
                parts = concat_particles([c[0] for c in chunks])
                statuses = np.concatenate([c[1] for c in chunks])
                dirs = np.concatenate([c[2] for c in chunks])
                mail.post(st.rank, donor, "collected", (parts, statuses, dirs))
            recs[r].stage_collect_s += time.perf_counter() - t0
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            for d, j in st.neighborhood.neighbors:
                msg = mail.take(st.rank, "collected", j)
                expected = st.loaned_out.get(d)
                got = msg[0].ids if msg is not None else np.empty(0, dtype=np.int64)
                if expected is not None and not np.array_equal(np.sort(expected), np.sort(got)):
                    raise InvariantError(f"rank {st.rank}: loan return mismatch from rank {j}")
                st.loaned_out.pop(d, None)
                if msg is None:
                    continue
                parts, statuses, dirs = msg
                parts.loaned_from[:] = -1
                alive = statuses == _COLLECT_ACTIVE
                if alive.any():
                    rows = np.nonzero(alive)[0]
                    st.queue = concat_particles([st.queue, parts.select(rows)])
                oob = statuses == STATUS_OOB
                if oob.any():
                    rows = np.nonzero(oob)[0]
                    st._oob.append((parts.select(rows), dirs[rows].copy()))
            if st.loaned_out:
                raise InvariantError(f"rank {st.rank}: loans not returned: {sorted(st.loaned_out)}")
            recs[r].stage_collect_s += time.perf_counter() - t0

        # Stage 6: out-of-bounds distribution by the home ranks.
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            pending = st._oob
            st._oob = []
            sends: dict[int, list] = {}
            for part, dirs in pending:
                for d in np.unique(dirs):
                    rows = np.nonzero(dirs == d)[0]
                    target = route_out_of_bounds(st.neighborhood, int(d))
                    if target is None:
                        st.exited += rows.size
                        continue
                    sends.setdefault(target, []).append(part.select(rows))
            for target in sorted(sends):
                out = concat_particles(sends[target])
                out.home[:] = target
                out.loaned_from[:] = -1
                mail.post(st.rank, target, "oob", out)
                recs[r].sent_oob += len(out)
            recs[r].stage_oob_s += time.perf_counter() - t0
        for r in order:
            st = states[r]
            t0 = time.perf_counter()
            arrivals = []
            for d, j in st.neighborhood.neighbors:
                part = mail.take(st.rank, "oob", j)
                if part is not None:
                    arrivals.append(part)
            if arrivals:
                st.queue = concat_particles([st.queue] + arrivals)
                recs[r].recv_oob = sum(len(p) for p in arrivals)
            recs[r].stage_oob_s += time.perf_counter() - t0

        # Post-round metrics and invariants.
        max_integrate = max(recs[r].stage_integrate_s for r in recs)
        for r in recs:
            recs[r].idle_s = max_integrate - recs[r].stage_integrate_s
        self.lif_rows.append((
            round_index,
            lif([recs[r].load_post for r in sorted(recs)]),
            lif([recs[r].integrate_steps for r in sorted(recs)]),
        ))
        self._conservation_check(round_index)
        out_records = [recs[r] for r in sorted(recs)]
        self.records.extend(out_records)
        return out_records

    def run(self) -> RunResult:
        round_index = 0
        while not check_completion(self.states):
            round_index += 1
            if round_index > self.round_cap:
                raise RoundLimitError(f"exceeded {self.round_cap} rounds; configuration diverges")
            self.run_round(round_index)
        curves = merge_curves([s.store for s in self.states]) if self.collect_curves else None
        return RunResult(
            scheduler=self.scheduler,
            grid_dims=self.grid.dims,
            seed_count=self.seed_count,
            rounds=round_index,
            terminated=sum(s.terminated for s in self.states),
            exited=sum(s.exited for s in self.states),
            records=self.records,
            lif_rows=self.lif_rows,
            round_totals=self.round_totals,
            curves=curves,
        )
