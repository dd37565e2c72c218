"""Workflows, tasks, volunteer nodes and their catalogs.

A catalog is the static description of a volunteer edge-cloud: the registered
workflows with their security/latency requirements and the pool of volunteer
nodes with their offered security posture, hardware and preferences.
"""

from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

FACTORS = ("AC", "CA", "IA", "SC", "SI")


class CatalogError(ValueError):
    """Raised when a catalog file or mapping is malformed."""


class SecurityLevel(IntEnum):
    LOW = 1
    MODERATE = 2
    HIGH = 3

    @classmethod
    def parse(cls, value) -> "SecurityLevel":
        if isinstance(value, SecurityLevel):
            return value
        key = str(value).strip().upper()
        try:
            return _LEVEL_BY_LETTER[key]
        except KeyError:
            raise CatalogError(f"security level must be one of L, M, H, got {value!r}") from None

    @property
    def letter(self) -> str:
        return self.name[0]


_LEVEL_BY_LETTER = {
    "L": SecurityLevel.LOW,
    "M": SecurityLevel.MODERATE,
    "H": SecurityLevel.HIGH,
}


@dataclass(frozen=True)
class SecurityVector:
    """Security levels for the five factors, stored in FACTORS order."""

    levels: tuple[SecurityLevel, ...]

    def __post_init__(self):
        if len(self.levels) != len(FACTORS):
            raise CatalogError(f"security vector needs {len(FACTORS)} factors, got {len(self.levels)}")
        object.__setattr__(self, "levels", tuple(SecurityLevel.parse(v) for v in self.levels))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "SecurityVector":
        keys = {str(k).upper() for k in mapping}
        missing = [f for f in FACTORS if f not in keys]
        if missing:
            raise CatalogError(f"missing security factor(s): {', '.join(missing)}")
        extra = keys - set(FACTORS)
        if extra:
            raise CatalogError(f"unknown security factor(s): {', '.join(sorted(extra))}")
        upper = {str(k).upper(): v for k, v in mapping.items()}
        return cls(tuple(SecurityLevel.parse(upper[f]) for f in FACTORS))

    @classmethod
    def from_string(cls, letters: str) -> "SecurityVector":
        """``"HHHLL"`` -> {AC:H, CA:H, IA:H, SC:L, SI:L}."""
        return cls(tuple(SecurityLevel.parse(c) for c in letters))

    def __getitem__(self, factor: str) -> SecurityLevel:
        return self.levels[FACTORS.index(factor)]

    def to_mapping(self) -> dict[str, str]:
        return {f: lvl.letter for f, lvl in zip(FACTORS, self.levels)}

    def __str__(self) -> str:
        return "".join(lvl.letter for lvl in self.levels)


@dataclass(frozen=True)
class Workflow:
    id: str
    sspecs: SecurityVector
    qspecs_latency: float  # seconds
    base_exec_time: float  # seconds per unit data on the reference hardware

    def __post_init__(self):
        if not self.qspecs_latency > 0:
            raise CatalogError(f"workflow {self.id}: qspecs_latency must be > 0")
        if not self.base_exec_time > 0:
            raise CatalogError(f"workflow {self.id}: base_exec_time must be > 0")


@dataclass(frozen=True)
class Task:
    task_id: int
    workflow: Workflow
    data_size: float
    submit_time: float
    user_id: int
    qspecs: float
    sspecs: SecurityVector

    def __post_init__(self):
        if self.data_size < 0:
            raise ValueError("data_size must be >= 0")
        if not self.qspecs > 0:
            raise ValueError("qspecs must be > 0")

    @classmethod
    def of(cls, task_id: int, workflow: Workflow, data_size: float,
           submit_time: float = 0.0, user_id: int = 0) -> "Task":
        """Instantiate a task of ``workflow``; QSpecs and SSpecs come from the workflow."""
        return cls(task_id, workflow, float(data_size), float(submit_time), int(user_id),
                   workflow.qspecs_latency, workflow.sspecs)


@dataclass(frozen=True)
class HardwareProfile:
    id: str
    speed_factor: float

    def __post_init__(self):
        if not self.speed_factor > 0:
            raise CatalogError(f"hardware {self.id}: speed_factor must be > 0")


# config1 is the reference machine; config2 (i9, 64GB) is modelled as 1.5x faster.
HARDWARE = {
    "config1": HardwareProfile("config1", 1.0),
    "config2": HardwareProfile("config2", 1.5),
}


@dataclass
class QueueEntry:
    """A job held in a node's FIFO queue (the head is the one executing)."""

    task: Task
    est_exec: float
    actual_exec: float
    start_time: float
    completion_time: float
    remaining: float  # estimated seconds of work left, as the scheduler sees it


@dataclass
class VNode:
    device_id: int
    rspecs: SecurityVector
    hardware: HardwareProfile
    preference: tuple[int, ...] = ()
    trust: float = 1.0
    capacity: int = 5
    queue: deque = field(default_factory=deque)

    def __post_init__(self):
        self.preference = tuple(int(u) for u in self.preference)
        if len(set(self.preference)) != len(self.preference):
            raise CatalogError(f"vnode {self.device_id}: preference entries must be unique")
        if not 0.0 <= self.trust <= 1.0:
            raise CatalogError(f"vnode {self.device_id}: trust must lie in [0, 1]")
        if self.capacity <= 0:
            raise CatalogError(f"vnode {self.device_id}: queue capacity must be > 0")

    @property
    def is_full(self) -> bool:
        return len(self.queue) >= self.capacity

    def clone(self) -> "VNode":
        """Fresh copy with an empty queue."""
        vn = copy.copy(self)
        vn.queue = deque()
        return vn


@dataclass
class Catalog:
    workflows: list[Workflow]
    vnodes: list[VNode]
    n_users: int = 10
    rho: int = 5
    gamma: int = 5

    def __post_init__(self):
        if not self.workflows:
            raise CatalogError("no workflows")
        if not self.vnodes:
            raise CatalogError("no volunteer nodes")
        if self.gamma <= 0:
            raise CatalogError("gamma_queue_capacity must be > 0")
        if self.n_users <= 0:
            raise CatalogError("n_users must be > 0")
        ids = [w.id for w in self.workflows]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate workflow id")
        for vn in self.vnodes:
            if len(vn.preference) > self.rho:
                raise CatalogError(f"vnode {vn.device_id}: preference longer than rho={self.rho}")
            if any(not 0 <= u < self.n_users for u in vn.preference):
                raise CatalogError(f"vnode {vn.device_id}: preference names unknown user")

    def workflow(self, wid: str) -> Workflow:
        for w in self.workflows:
            if w.id == wid:
                return w
        raise KeyError(wid)

    def subset(self, workflow_ids: Iterable[str]) -> "Catalog":
        keep = [self.workflow(w) for w in workflow_ids]
        return Catalog(keep, [vn.clone() for vn in self.vnodes], self.n_users, self.rho, self.gamma)


# Tables I and II. QSpecs/exec-time figures are simulation-scale stand-ins.
PAPER_WORKFLOWS = (
    ("PGen", "HHHLL", 1800.0, 900.0),
    ("RNASeq", "HHHLL", 750.0, 300.0),
    ("Synthetic1", "MMLLL", 1200.0, 300.0),
    ("Synthetic2", "HMLLL", 2250.0, 900.0),
)

PAPER_RSPECS = (
    ("config1", "HHHML"),
    ("config1", "HHHLL"),
    ("config1", "HHHMM"),
    ("config1", "HMLLL"),
    ("config2", "HHHMM"),
    ("config2", "HHHLL"),
)


def default_paper_catalog(seed: int = 0, n_vns: int = 12, n_users: int = 10,
                          rho: int = 5, gamma: int = 5) -> Catalog:
    """Four workflows and ``n_vns`` nodes cycling through the six RSpecs rows.

    With the default ``n_vns=12`` every RSpecs row gets two nodes. Preference
    lists are uniform random draws of ``rho`` distinct users.
    """
    rng = np.random.default_rng(seed)
    workflows = [
        Workflow(wid, SecurityVector.from_string(s), q, b) for wid, s, q, b in PAPER_WORKFLOWS
    ]
    vnodes = []
    for k in range(n_vns):
        hw, rs = PAPER_RSPECS[k % len(PAPER_RSPECS)]
        pref = rng.choice(n_users, size=min(rho, n_users), replace=False)
        vnodes.append(VNode(k + 1, SecurityVector.from_string(rs), HARDWARE[hw],
                            tuple(int(u) for u in pref), 1.0, gamma))
    return Catalog(workflows, vnodes, n_users, rho, gamma)


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise CatalogError(f"{where}: missing '{key}'")
    return mapping[key]


def catalog_from_dict(doc: Mapping) -> Catalog:
    if not isinstance(doc, Mapping):
        raise CatalogError("catalog document must be a mapping")
    glob = doc.get("globals") or {}
    gamma = int(glob.get("gamma_queue_capacity", 5))
    rho = int(glob.get("rho", 5))
    n_users = int(glob.get("n_users", 10))
    if gamma <= 0:
        raise CatalogError("gamma_queue_capacity must be > 0")

    workflows = []
    for i, w in enumerate(doc.get("workflows") or []):
        where = f"workflows[{i}]"
        workflows.append(Workflow(
            str(_require(w, "id", where)),
            SecurityVector.from_mapping(_require(w, "sspecs", where)),
            float(_require(w, "qspecs_latency_s", where)),
            float(_require(w, "base_exec_time_s", where)),
        ))
    vnodes = []
    for i, v in enumerate(doc.get("vnodes") or []):
        where = f"vnodes[{i}]"
        hw = str(_require(v, "hardware", where))
        if hw not in HARDWARE:
            raise CatalogError(f"{where}: unknown hardware {hw!r}")
        vnodes.append(VNode(
            int(_require(v, "device_id", where)),
            SecurityVector.from_mapping(_require(v, "rspecs", where)),
            HARDWARE[hw],
            tuple(v.get("preference") or ()),
            float(v.get("trust", 1.0)),
            gamma,
        ))
    return Catalog(workflows, vnodes, n_users, rho, gamma)


def catalog_to_dict(catalog: Catalog) -> dict:
    return {
        "globals": {
            "gamma_queue_capacity": catalog.gamma,
            "rho": catalog.rho,
            "n_users": catalog.n_users,
        },
        "workflows": [
            {
                "id": w.id,
                "sspecs": w.sspecs.to_mapping(),
                "qspecs_latency_s": w.qspecs_latency,
                "base_exec_time_s": w.base_exec_time,
            }
            for w in catalog.workflows
        ],
        "vnodes": [
            {
                "device_id": vn.device_id,
                "rspecs": vn.rspecs.to_mapping(),
                "hardware": vn.hardware.id,
                "trust": vn.trust,
                "preference": list(vn.preference),
            }
            for vn in catalog.vnodes
        ],
    }


def serialize_catalog(catalog: Catalog) -> str:
    return yaml.safe_dump(catalog_to_dict(catalog), sort_keys=False)


def load_catalog(path: str | Path) -> Catalog:
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CatalogError(f"cannot parse {path}: {exc}") from exc
    return catalog_from_dict(doc)


def user_rank(preference: Sequence[int], user_id: int) -> int | None:
    """1-based position of ``user_id`` in a preference list, or None."""
    try:
        return preference.index(user_id) + 1
    except ValueError:
        return None
