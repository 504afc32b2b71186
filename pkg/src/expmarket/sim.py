"""The deterministic fleet simulator.

Each epoch every robot maps its route, then the team walks the trade
pipeline through the shared finite-state machine: sample new content,
tender it to candidate sellers, purchase through the chosen partner(s), and
merge the exchanged patches. Barriers demand identical (state, semaphore)
across the team before anyone advances. Everything is driven by streams
derived from (seed, trial), so a scenario run is a pure function of its
config and seed.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field

from .catalogue import (
    Advisory,
    ProductLedger,
    TradeDirection,
    advise,
    product_of,
    shopping_list,
)
from .config import ScenarioConfig
from .foray import explain_observations, record_foray_patch
from .graph import Graph, Observation
from .ids import NodeIdGenerator, RobotId, derive_seed
from .localiser import LocaliserConfig, MatchCounter
from .market import (
    Belief,
    Measurement,
    NoEligibleSellers,
    Strategy,
    adjudicate,
    price_nodes,
    query_bytes,
    sample_for_query,
    select_partners,
    update_belief,
)
from .merging import TradeStats, execute_trade
from .patches import Patch, Repository
from .serialize import patch_wire_size
from .world import Route, World

TENDER_REPLY_BYTES = 16
ADVISORY_BYTES = 64


class DesyncDetected(Exception):
    """Two robots share a semaphore value but disagree on the state."""


class Phase(enum.Enum):
    IDLE = "IDLE"
    MAPPING = "MAPPING"
    SAMPLING = "SAMPLING"
    TENDERING = "TENDERING"
    PURCHASING = "PURCHASING"
    MERGING = "MERGING"


_CYCLE = [Phase.MAPPING, Phase.SAMPLING, Phase.TENDERING,
          Phase.PURCHASING, Phase.MERGING, Phase.IDLE]


@dataclass(frozen=True)
class FsmState:
    """Published robot state: descriptor plus iteration semaphore."""

    theta: Phase = Phase.IDLE
    psi: int = 0

    def advance(self) -> "FsmState":
        if self.theta is Phase.IDLE:
            return FsmState(Phase.MAPPING, self.psi + 1)
        nxt = _CYCLE[_CYCLE.index(self.theta) + 1]
        return FsmState(nxt, self.psi)


def barrier_sync(team_states: dict[RobotId, FsmState]) -> bool:
    """Proceed only when the whole team publishes one (state, semaphore)."""
    states = list(team_states.values())
    if not states:
        return True
    by_psi: dict[int, set[Phase]] = {}
    for st in states:
        by_psi.setdefault(st.psi, set()).add(st.theta)
    for psi, thetas in by_psi.items():
        if len(thetas) > 1:
            raise DesyncDetected(f"semaphore {psi} reported with states "
                                 f"{sorted(t.value for t in thetas)}")
    first = states[0]
    return all(st == first for st in states)


@dataclass
class NetworkModel:
    """Simulated transport: uniform latency, per-robot byte ledgers."""

    latency_low_ms: float = 50.0
    latency_high_ms: float = 500.0
    bytes_per_node_packet: int = 256
    clock_ms: float = 0.0
    sent: dict = field(default_factory=dict)       # robot -> {kind: bytes}
    received: dict = field(default_factory=dict)

    def _account(self, ledger: dict, robot: RobotId, kind: str, n: int) -> None:
        ledger.setdefault(robot, {})
        ledger[robot][kind] = ledger[robot].get(kind, 0) + n


def deliver(net: NetworkModel, msg_bytes: int, rng: random.Random,
            src: RobotId | None = None, dst: RobotId | None = None,
            kind: str = "query") -> float:
    """Ship a message: returns its arrival time on the simulated clock."""
    if msg_bytes < 0:
        raise ValueError("negative message size")
    arrival = net.clock_ms + rng.uniform(net.latency_low_ms, net.latency_high_ms)
    if src is not None:
        net._account(net.sent, src, kind, msg_bytes)
    if dst is not None:
        net._account(net.received, dst, kind, msg_bytes)
    return arrival


def failure_distribution(dropouts) -> list[tuple[float, float]]:
    """Empirical complementary CDF: P(X >= x) at each distinct dropout."""
    values = sorted(dropouts)
    n = len(values)
    if n == 0:
        return []
    out = []
    for i, x in enumerate(values):
        if i > 0 and x == values[i - 1]:
            continue
        out.append((x, (n - i) / n))
    return out


@dataclass
class ForayResult:
    patch: Patch
    dropouts: list[float]
    observations: list[Observation]
    final_position: float


def run_foray(repo: Repository, world: World, route: Route, epoch: int,
              localiser: LocaliserConfig, ids: NodeIdGenerator,
              metadata=lambda m: (0, 0.0),
              counter: MatchCounter | None = None) -> ForayResult:
    """Walk a route: localise every stop, record the unexplained as a patch.

    Blind travel accumulates while localisation fails and flushes into the
    drop-out list at the next success or the route's end; the first stop
    contributes no distance (nothing was travelled blind to reach it).
    """
    spacing = world.config.node_spacing_m
    positions = route.positions(spacing)
    observations = [world.observe(repo.robot, epoch, p) for p in positions]
    explained = explain_observations(repo.graph, observations, localiser, counter)
    dropouts: list[float] = []
    run = 0.0
    for m, hit in enumerate(explained):
        if hit is None:
            if m > 0:
                run += spacing
        else:
            repo.graph.bump_path_memory(hit)
            if run > 0:
                dropouts.append(run)
                run = 0.0
    if run > 0:
        dropouts.append(run)
    patch = record_foray_patch(repo.graph, observations, repo.robot, epoch,
                               localiser, ids, metadata=metadata,
                               _explained=explained)
    return ForayResult(patch, dropouts, observations, positions[-1])


@dataclass
class TrialMetrics:
    """Everything one trial leaves behind (all rows keyed by epoch)."""

    trial: int
    seed: int
    robots: int
    forays: int
    strategy: str
    dropouts: list[tuple[int, int, float]] = field(default_factory=list)
    # k, robot, sent query/patch/advisory, received query/patch/advisory, match ops
    traffic: list[tuple[int, int, int, int, int, int, int, int, int]] = field(default_factory=list)
    map_sizes: list[tuple[int, int, int, int]] = field(default_factory=list)
    trades: list[TradeStats] = field(default_factory=list)
    beliefs: list[tuple[int, int, int, int, float, float]] = field(default_factory=list)
    final_digests: list[str] = field(default_factory=list)
    clock_ms: float = 0.0

    _KIND_COLS = {"query": 0, "patch": 1, "advisory": 2}

    def dropout_values(self, robot: RobotId | None = None) -> list[float]:
        return [d for k, r, d in self.dropouts if robot is None or r == robot]

    def total_dropout(self, robot: RobotId | None = None) -> float:
        return sum(self.dropout_values(robot))

    def bytes_sent(self, robot: RobotId | None = None,
                   kinds=("query", "patch", "advisory")) -> int:
        cols = [2 + self._KIND_COLS[k] for k in kinds]
        return sum(sum(row[c] for c in cols) for row in self.traffic
                   if robot is None or row[1] == robot)

    def bytes_received(self, robot: RobotId | None = None,
                       kinds=("query", "patch", "advisory")) -> int:
        cols = [5 + self._KIND_COLS[k] for k in kinds]
        return sum(sum(row[c] for c in cols) for row in self.traffic
                   if robot is None or row[1] == robot)

    def match_ops(self, robot: RobotId | None = None) -> int:
        return sum(row[8] for row in self.traffic if robot is None or row[1] == robot)


class _Agent:
    def __init__(self, robot: RobotId, cfg: ScenarioConfig, trial_seed: int):
        self.robot = robot
        self.repo = Repository(robot)
        self.ledger = ProductLedger()
        self.beliefs: dict[RobotId, Belief] = {}
        self.product_beliefs: dict[int, dict[RobotId, Belief]] = {}
        self.counter = MatchCounter()
        self.ids = NodeIdGenerator(trial_seed, robot)
        self.partner_rng = random.Random(derive_seed(trial_seed, "partners", robot))
        self.fsm = FsmState()
        self.trade_count = 0

    def belief_about(self, seller: RobotId) -> Belief:
        return self.beliefs.get(seller, Belief(seller))

    def observe_trade(self, seller: RobotId, k: int, patch: Patch,
                      choice_policy) -> None:
        nodes = patch.inserted_nodes()
        value = price_nodes(nodes, choice_policy)
        m = Measurement(seller=seller, k=k, value=value,
                        patch_node_ids=frozenset(n.id for n in nodes))
        self.beliefs[seller] = update_belief(self.belief_about(seller), m)
        by_product: dict[int, list] = {}
        for n in nodes:
            by_product.setdefault(n.product, []).append(n)
        for product, pnodes in by_product.items():
            cell = self.product_beliefs.setdefault(product, {})
            pm = Measurement(seller=seller, k=k,
                             value=price_nodes(pnodes, choice_policy))
            cell[seller] = update_belief(cell.get(seller, Belief(seller)), pm)

    def apply_ledger(self, received: Patch, delivered: Patch) -> None:
        self.ledger.record_trade(received, TradeDirection.BOUGHT)
        self.ledger.record_trade(delivered, TradeDirection.SOLD)
        for el in received.deletes().values():
            self.ledger.release(el.node.id, el.node.product)


def _tender_offer(seller_graph: Graph, sample: Patch | None, choice_policy) -> float:
    """What the seller measures on the buyer's sample: the mean value of the
    content it could supply for the sampled products."""
    if sample is None:
        return 0.0
    sampled = sample.inserted_nodes()
    if not sampled:
        return 0.0
    products = {n.product for n in sampled}
    sample_ids = {n.id for n in sampled}
    supply = [n for n in seller_graph.nodes()
              if n.product in products and n.id not in sample_ids]
    return price_nodes(supply, choice_policy)


def run_trial(config: ScenarioConfig, seed: int, trial: int) -> TrialMetrics:
    """One seeded trial of the scenario: K epochs of map-then-trade."""
    trial_seed = derive_seed(seed, "trial", trial)
    world = World(config.catalogue, derive_seed(trial_seed, "world"), config.world)
    net = NetworkModel(config.latency_low_ms, config.latency_high_ms,
                       config.budget.bytes_per_node)
    net_rng = random.Random(derive_seed(trial_seed, "net"))
    team = set(range(config.robots))
    agents = [_Agent(i, config, trial_seed) for i in range(config.robots)]
    choice_policy = config.commutation.choice
    metrics = TrialMetrics(trial=trial, seed=seed, robots=config.robots,
                           forays=config.forays,
                           strategy=config.trading.kind.value)
    advisories: dict[RobotId, Advisory] = {}
    prev_sent: dict[RobotId, dict] = {}
    prev_recv: dict[RobotId, dict] = {}
    prev_ops = [0] * config.robots

    def quality_fn(robot: RobotId, epoch: int):
        inlier_mu = config.quality_inlier_means[robot]
        fabmap_mu = config.quality_fabmap_means[robot]

        def metadata(m: int) -> tuple[int, float]:
            rng = random.Random(derive_seed(trial_seed, "quality", robot, epoch, m))
            inliers = max(0, round(rng.gauss(inlier_mu, max(inlier_mu / 10.0, 0.5))))
            fabmap = min(1.0, max(0.0, rng.gauss(fabmap_mu, 0.1)))
            return inliers, fabmap

        return metadata

    def advance_all(expected: Phase) -> None:
        for a in agents:
            a.fsm = a.fsm.advance()
        states = {a.robot: a.fsm for a in agents}
        if not barrier_sync(states):
            raise DesyncDetected("lockstep pipeline lost synchronization")
        if agents and agents[0].fsm.theta is not expected:
            raise DesyncDetected(f"expected {expected}, at {agents[0].fsm.theta}")

    for k in range(1, config.forays + 1):
        # -- MAPPING ------------------------------------------------------
        advance_all(Phase.MAPPING)
        foray_patches: dict[RobotId, Patch] = {}
        last_positions: dict[RobotId, float] = {}
        for a in agents:
            route = config.routes.route_for(a.robot, k)
            result = run_foray(a.repo, world, route, k, config.commutation.localiser,
                               a.ids, metadata=quality_fn(a.robot, k),
                               counter=a.counter)
            if not result.patch.is_empty():
                a.repo.commit(result.patch)
                for node in result.patch.inserted_nodes():
                    a.ledger.hold(node.id, node.product)
            foray_patches[a.robot] = result.patch
            last_positions[a.robot] = result.final_position
            for d in result.dropouts:
                metrics.dropouts.append((k, a.robot, d))

        # -- SAMPLING -----------------------------------------------------
        advance_all(Phase.SAMPLING)
        samples: dict[RobotId, Patch | None] = {}
        for a in agents:
            patch = foray_patches[a.robot]
            samples[a.robot] = (
                sample_for_query(patch, config.budget, choice_policy)
                if patch.inserts() else None
            )

        # -- TENDERING ----------------------------------------------------
        advance_all(Phase.TENDERING)
        candidates: dict[RobotId, list[RobotId]] = {}
        offers: dict[RobotId, dict[RobotId, float]] = {}
        arrivals = [net.clock_ms]
        for a in agents:
            chosen = select_partners(config.trading, a.beliefs, a.robot,
                                     team, a.partner_rng)
            candidates[a.robot] = sorted(chosen)
            offers[a.robot] = {}
            sample = samples[a.robot]
            qb = query_bytes(sample, config.budget) if sample is not None else 0
            for j in candidates[a.robot]:
                arrivals.append(deliver(net, qb, net_rng, src=a.robot, dst=j,
                                        kind="query"))
                offer = _tender_offer(agents[j].repo.graph, sample, choice_policy)
                arrivals.append(deliver(net, TENDER_REPLY_BYTES, net_rng,
                                        src=j, dst=a.robot, kind="query"))
                offers[a.robot][j] = offer
        net.clock_ms = max(arrivals)

        # -- PURCHASING ---------------------------------------------------
        advance_all(Phase.PURCHASING)
        orders: list[tuple[RobotId, RobotId, frozenset[int]]] = []
        for a in agents:
            cands = candidates[a.robot]
            if not cands:
                continue
            if config.trading.kind is Strategy.ALL or len(cands) == 1:
                sellers = cands
            else:
                initialized = {j: offers[a.robot][j] for j in cands
                               if a.belief_about(j).initialized}
                try:
                    sellers = [adjudicate(initialized, a.beliefs)]
                except NoEligibleSellers:
                    sellers = [cands[0]]
            current = product_of(last_positions[a.robot], config.catalogue)
            wanted = shopping_list(config.shopping, current, config.catalogue,
                                   advisories, buyer=a.robot)
            orders.append((a.robot, tuple(sellers), frozenset(wanted)))

        # -- MERGING ------------------------------------------------------
        advance_all(Phase.MERGING)
        arrivals = [net.clock_ms]
        for buyer, sellers, wanted in sorted(orders, key=lambda o: o[0]):
            for seller in sellers:
                a_buy, a_sell = agents[buyer], agents[seller]
                merge_counter = MatchCounter()
                out = execute_trade(a_buy.repo, a_sell.repo, config.commutation,
                                    products=set(wanted), k=k,
                                    counter=merge_counter)
                a_buy.repo, a_sell.repo = out.left, out.right
                a_buy.counter.add(merge_counter.ops)
                a_sell.counter.add(merge_counter.ops)
                metrics.trades.append(out.stats)
                arrivals.append(deliver(net, patch_wire_size(out.pair.for_left),
                                        net_rng, src=seller, dst=buyer, kind="patch"))
                arrivals.append(deliver(net, patch_wire_size(out.pair.for_right),
                                        net_rng, src=buyer, dst=seller, kind="patch"))
                a_buy.observe_trade(seller, k, out.pair.for_left, choice_policy)
                a_sell.observe_trade(buyer, k, out.pair.for_right, choice_policy)
                a_buy.apply_ledger(received=out.pair.for_left,
                                   delivered=out.pair.for_right)
                a_sell.apply_ledger(received=out.pair.for_right,
                                    delivered=out.pair.for_left)
                a_buy.trade_count += 1

        # advisories travel at the barrier out of MERGING
        if config.trading.kind is not Strategy.NONE:
            new_advisories = {}
            for a in agents:
                favourites = {}
                for product in sorted(a.product_beliefs):
                    best = advise(a.product_beliefs, product)
                    if best is not None:
                        favourites[product] = best
                new_advisories[a.robot] = Advisory(
                    favourite_sellers=favourites,
                    advertisement=a.ledger.advertise(),
                )
                for other in sorted(team - {a.robot}):
                    arrivals.append(deliver(net, ADVISORY_BYTES, net_rng,
                                            src=a.robot, dst=other, kind="advisory"))
            advisories = new_advisories
        net.clock_ms = max(arrivals)

        # -- IDLE: snapshot the epoch -------------------------------------
        advance_all(Phase.IDLE)
        for a in agents:
            metrics.map_sizes.append((k, a.robot, len(a.repo.graph),
                                      a.repo.graph.edge_count()))
            sent_now = [net.sent.get(a.robot, {}).get(kind, 0)
                        for kind in ("query", "patch", "advisory")]
            recv_now = [net.received.get(a.robot, {}).get(kind, 0)
                        for kind in ("query", "patch", "advisory")]
            sent_was = [prev_sent.get(a.robot, {}).get(kind, 0)
                        for kind in ("query", "patch", "advisory")]
            recv_was = [prev_recv.get(a.robot, {}).get(kind, 0)
                        for kind in ("query", "patch", "advisory")]
            metrics.traffic.append((k, a.robot,
                                    *(n - w for n, w in zip(sent_now, sent_was)),
                                    *(n - w for n, w in zip(recv_now, recv_was)),
                                    a.counter.ops - prev_ops[a.robot]))
            prev_ops[a.robot] = a.counter.ops
            for seller in sorted(a.beliefs):
                b = a.beliefs[seller]
                metrics.beliefs.append((k, a.robot, seller, b.count,
                                        b.mean, b.variance))
        prev_sent = {r: dict(kinds) for r, kinds in net.sent.items()}
        prev_recv = {r: dict(kinds) for r, kinds in net.received.items()}

    metrics.final_digests = [a.repo.digest().hex() for a in agents]
    metrics.clock_ms = net.clock_ms
    total_sent = sum(sum(kinds.values()) for kinds in net.sent.values())
    total_recv = sum(sum(kinds.values()) for kinds in net.received.values())
    if total_sent != total_recv:
        raise RuntimeError("network byte conservation violated")
    for a in agents:
        _check_wares_partition(a)
    return metrics


def _check_wares_partition(agent: _Agent) -> None:
    """The wares ledger must partition the agent's current node set."""
    union: set = set()
    for product, ids in agent.ledger.wares.items():
        if union & ids:
            raise RuntimeError(f"robot {agent.robot}: wares overlap at product {product}")
        union |= ids
    if union != agent.repo.graph.node_ids():
        raise RuntimeError(f"robot {agent.robot}: wares ledger out of step with the map")


def run_scenario(config: ScenarioConfig, seed: int, trials: int = 1,
                 jobs: int = 1) -> list[TrialMetrics]:
    """Run M seeded trials; results are ordered by trial index."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_trial, config, seed, t) for t in range(trials)]
            return [f.result() for f in futures]
    return [run_trial(config, seed, t) for t in range(trials)]
