"""Scenario configuration: a strict, sectioned JSON document.

Sections are world / team / strategies / network / sim. Unknown keys are
rejected and every diagnostic names the offending field, so a typo'd config
fails loudly instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .catalogue import Catalogue, bundled_catalogue, load_catalogue
from .localiser import LocaliserConfig
from .market import Strategy, TradingStrategy, SamplingBudget
from .catalogue import ShoppingKind, ShoppingStrategy
from .merging import Choice, ChoicePolicy, Commutation, CommutationPolicy
from .world import RoutePlan, WorldConfig


class ConfigError(Exception):
    """Invalid scenario config; the message names the field."""


class _SectionReader:
    def __init__(self, name: str, doc: dict):
        if not isinstance(doc, dict):
            raise ConfigError(f"{name}: expected an object")
        self.name = name
        self.doc = dict(doc)

    def take(self, key, kind, default=None, required=False):
        if key not in self.doc:
            if required:
                raise ConfigError(f"{self.name}.{key}: required field missing")
            return default
        val = self.doc.pop(key)
        if kind is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
            raise ConfigError(f"{self.name}.{key}: expected {kind.__name__}, got {type(val).__name__}")
        return val

    def finish(self):
        if self.doc:
            extra = ", ".join(sorted(self.doc))
            raise ConfigError(f"{self.name}: unknown keys: {extra}")


def _enum(section: str, key: str, value: str, enum_cls):
    for candidate in (value, value.lower(), value.upper()):
        try:
            return enum_cls(candidate)
        except ValueError:
            continue
    options = ", ".join(e.value for e in enum_cls)
    raise ConfigError(f"{section}.{key}: '{value}' is not one of: {options}")


@dataclass
class ScenarioConfig:
    catalogue: Catalogue
    catalogue_name: str
    world: WorldConfig
    robots: int
    quality_inlier_means: list[float]
    quality_fabmap_means: list[float]
    routes: RoutePlan
    trading: TradingStrategy
    shopping: ShoppingStrategy
    commutation: CommutationPolicy
    budget: SamplingBudget
    latency_low_ms: float
    latency_high_ms: float
    forays: int
    raw: dict = field(default_factory=dict, repr=False)


def parse_scenario_config(doc: dict, base_dir: Path | None = None) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level: expected an object")
    unknown = set(doc) - {"world", "team", "strategies", "network", "sim"}
    if unknown:
        raise ConfigError(f"top level: unknown sections: {', '.join(sorted(unknown))}")
    for section in ("world", "team", "strategies", "network", "sim"):
        if section not in doc:
            raise ConfigError(f"top level: missing section '{section}'")

    w = _SectionReader("world", doc["world"])
    cat_name = w.take("catalogue", str, required=True)
    world_cfg = WorldConfig(
        descriptor_dim=w.take("descriptor_dim", int, 16),
        node_spacing_m=w.take("node_spacing_m", float, 5.0),
        latent_scale=w.take("latent_scale", float, 1.0),
        drift_sigma=w.take("drift_sigma", float, 0.05),
        noise_sigma=w.take("noise_sigma", float, 0.01),
    )
    w.finish()
    if world_cfg.descriptor_dim < 1:
        raise ConfigError("world.descriptor_dim: must be >= 1")
    if world_cfg.node_spacing_m <= 0:
        raise ConfigError("world.node_spacing_m: must be positive")
    if cat_name.endswith(".catalogue"):
        path = Path(cat_name)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"world.catalogue: file not found: {path}")
        catalogue = load_catalogue(path)
    else:
        try:
            catalogue = bundled_catalogue(cat_name)
        except FileNotFoundError:
            raise ConfigError(f"world.catalogue: no bundled catalogue named '{cat_name}'") from None

    t = _SectionReader("team", doc["team"])
    robots = t.take("robots", int, required=True)
    if robots < 2:
        raise ConfigError("team.robots: need at least 2 robots")
    inlier_means = t.take("quality_inlier_means", list, [30.0] * robots)
    fabmap_means = t.take("quality_fabmap_means", list, [0.5] * robots)
    route_width = t.take("route_width", int, 2)
    route_stride = t.take("route_stride", int, 2)
    route_shift = t.take("route_shift", int, 1)
    t.finish()
    for name, means in (("quality_inlier_means", inlier_means),
                        ("quality_fabmap_means", fabmap_means)):
        if len(means) != robots:
            raise ConfigError(f"team.{name}: need one value per robot ({robots})")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in means):
            raise ConfigError(f"team.{name}: values must be numbers")
    if not 1 <= route_width <= len(catalogue):
        raise ConfigError("team.route_width: must fit inside the catalogue")
    routes = RoutePlan(catalogue, width=route_width, stride=route_stride, shift=route_shift)

    s = _SectionReader("strategies", doc["strategies"])
    trading_kind = _enum("strategies", "trading",
                         s.take("trading", str, "ALL"), Strategy)
    exploit_fraction = s.take("exploit_fraction", float, 0.7)
    central_id = s.take("central_id", int, 0)
    shopping_kind = _enum("strategies", "shopping",
                          s.take("shopping", str, "WINDOW"), ShoppingKind)
    window_radius = s.take("window_radius", int, 1)
    commutation_kind = _enum("strategies", "commutation",
                             s.take("commutation", str, "UNION"), Commutation)
    choice_kind = _enum("strategies", "choice",
                        s.take("choice", str, "inliers"), Choice)
    sample_max_nodes = s.take("sample_max_nodes", int, 10)
    s.finish()
    if not 0.0 <= exploit_fraction <= 1.0:
        raise ConfigError("strategies.exploit_fraction: must be in [0, 1]")
    if not 0 <= central_id < robots:
        raise ConfigError("strategies.central_id: must name a team member")
    if choice_kind not in (Choice.INLIERS, Choice.FABMAP, Choice.PATH_MEMORY):
        raise ConfigError("strategies.choice: scenario runs need a pure policy "
                          "(inliers, fabmap, path_memory)")
    if sample_max_nodes < 1:
        raise ConfigError("strategies.sample_max_nodes: must be >= 1")

    n = _SectionReader("network", doc["network"])
    latency_low = n.take("latency_low_ms", float, 50.0)
    latency_high = n.take("latency_high_ms", float, 500.0)
    bytes_per_node = n.take("bytes_per_node_packet", int, 256)
    n.finish()
    if latency_low < 0 or latency_high < latency_low:
        raise ConfigError("network: need 0 <= latency_low_ms <= latency_high_ms")
    if bytes_per_node < 1:
        raise ConfigError("network.bytes_per_node_packet: must be >= 1")

    m = _SectionReader("sim", doc["sim"])
    forays = m.take("forays", int, required=True)
    tau_loc = m.take("tau_loc", float, 0.3)
    tau_m = m.take("tau_m", float, 0.12)
    seed_k = m.take("seed_k", int, 3)
    depth = m.take("depth", int, 2)
    m.finish()
    if forays < 1:
        raise ConfigError("sim.forays: must be >= 1")
    try:
        localiser = LocaliserConfig(tau_loc=tau_loc, tau_m=tau_m, seed_k=seed_k, depth=depth)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None

    return ScenarioConfig(
        catalogue=catalogue,
        catalogue_name=cat_name,
        world=world_cfg,
        robots=robots,
        quality_inlier_means=[float(v) for v in inlier_means],
        quality_fabmap_means=[float(v) for v in fabmap_means],
        routes=routes,
        trading=TradingStrategy(trading_kind, exploit_fraction=exploit_fraction,
                                central_id=central_id),
        shopping=ShoppingStrategy(shopping_kind, window_radius=window_radius),
        commutation=CommutationPolicy(commutation_kind, ChoicePolicy(choice_kind), localiser),
        budget=SamplingBudget(max_nodes=sample_max_nodes, bytes_per_node=bytes_per_node),
        latency_low_ms=latency_low,
        latency_high_ms=latency_high,
        forays=forays,
        raw=doc,
    )


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return parse_scenario_config(doc, base_dir=path.parent)


def bundled_scenario(name: str) -> dict:
    """Raw JSON document of a scenario shipped with the package."""
    from importlib import resources

    data = resources.files("expmarket").joinpath(f"data/{name}.json")
    return json.loads(data.read_text())
