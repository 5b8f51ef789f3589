"""Robot description parsing and per-node role resolution.

A description is a JSON document listing heterogeneous modules (limbs,
wheels, bodies, gripper tools) and the gripper-to-fixture attachments
joining them into one assembly. Parsing validates the attachment graph
(tree), derives one kinematic chain per limb, and computes the motor
inventory. Everything here is an immutable value; no I/O besides the
JSON text itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

__all__ = [
    "DescriptionError",
    "UnknownNodeError",
    "JointSpec",
    "ModuleSpec",
    "KinematicChain",
    "RobotDescription",
    "NodeRole",
    "parse_description",
    "serialize_description",
    "motor_count",
    "chain_for_node",
    "canonical_limb_joints",
    "limb_module",
    "wheel_module",
    "body_module",
    "minimal_description",
    "vehicle_description",
    "dragon_description",
    "tricycle_description",
    "V_MAX_DEFAULT",
    "LIMB_LINK_LENGTHS",
    "MOTORS_PER_KIND",
]

# 5.4 rpm joint actuator ceiling, in rad/s.
V_MAX_DEFAULT = 5.4 * 2.0 * math.pi / 60.0

# Canonical 7-DOF limb link lengths (m); the 1.55 m total is the hard
# constraint, the split between links is a modeling choice.
LIMB_LINK_LENGTHS = (0.10, 0.25, 0.30, 0.30, 0.30, 0.20, 0.10)

MODULE_KINDS = ("Limb", "Wheel", "Body", "Gripper-tool")

# Limb: 7 joint actuators + 2 gripper motors. Wheel: 2 drive motors.
MOTORS_PER_KIND = {"Limb": 9, "Wheel": 2, "Body": 0, "Gripper-tool": 1}

FIXTURES_PER_KIND = {"Limb": 0, "Wheel": 2, "Body": 4, "Gripper-tool": 0}

STACK_LEVELS = (1, 2, 3, 4, 5)
SPECIAL_ROLES = ("wheel-direct", "calibrator", "mission-control")


class DescriptionError(ValueError):
    """Raised for syntactically or semantically invalid descriptions."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownNodeError(LookupError):
    """Raised when a node id is absent from the role table."""


@dataclass(frozen=True)
class JointSpec:
    name: str
    axis: tuple[float, float, float]
    kind: str = "revolute"  # or "prismatic"
    limits: tuple[float, float] = (-2.967, 2.967)
    v_max: float = V_MAX_DEFAULT
    link_length: float = 0.0

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise DescriptionError(f"joint {self.name}: unknown kind {self.kind!r}")
        lo, hi = self.limits
        if not lo < hi:
            raise DescriptionError(f"joint {self.name}: limits {self.limits} not ordered")
        if self.v_max <= 0:
            raise DescriptionError(f"joint {self.name}: v_max must be positive")
        if self.link_length < 0:
            raise DescriptionError(f"joint {self.name}: negative link_length")
        norm = math.sqrt(sum(a * a for a in self.axis))
        if abs(norm - 1.0) > 1e-6:
            raise DescriptionError(f"joint {self.name}: axis must be a unit vector")


@dataclass(frozen=True)
class ModuleSpec:
    id: str
    kind: str
    joints: tuple[JointSpec, ...] = ()
    fixtures: tuple[str, ...] = ()
    motor_count: int = 0

    def __post_init__(self):
        if self.kind not in MODULE_KINDS:
            raise DescriptionError(f"module {self.id}: unknown kind {self.kind!r}")
        if self.kind == "Limb" and len(self.joints) != 7:
            raise DescriptionError(f"module {self.id}: a Limb needs 7 joints, got {len(self.joints)}")
        if self.kind != "Limb" and self.joints:
            raise DescriptionError(f"module {self.id}: only Limb modules carry chain joints")
        if len(set(self.fixtures)) != len(self.fixtures):
            raise DescriptionError(f"module {self.id}: duplicate fixture ids")

    @property
    def gripper_ports(self):
        if self.kind == "Limb":
            return (f"{self.id}.gripper1", f"{self.id}.gripper2")
        if self.kind == "Gripper-tool":
            return (f"{self.id}.gripper1",)
        return ()

    @property
    def fixture_ports(self):
        return tuple(f"{self.id}.{f}" for f in self.fixtures)


@dataclass(frozen=True)
class KinematicChain:
    root_frame: str
    joints: tuple[JointSpec, ...]
    tip_frame: str
    base_offset: float = 0.0  # root frame to first joint, along the zero-pose axis

    def __post_init__(self):
        if not self.joints:
            raise DescriptionError(f"chain {self.root_frame}->{self.tip_frame} has no joints")

    @property
    def reach(self):
        return self.base_offset + sum(j.link_length for j in self.joints)

    def joint_names(self):
        return tuple(j.name for j in self.joints)


@dataclass(frozen=True)
class RobotDescription:
    name: str
    modules: tuple[ModuleSpec, ...]
    attachments: tuple[tuple[str, str], ...]
    chains: dict[str, KinematicChain] = field(default_factory=dict)
    root: str | None = None

    def module(self, module_id: str) -> ModuleSpec:
        for m in self.modules:
            if m.id == module_id:
                return m
        raise DescriptionError(f"unknown module id {module_id!r}")

    def has_module(self, module_id: str) -> bool:
        return any(m.id == module_id for m in self.modules)


@dataclass(frozen=True)
class NodeRole:
    node_id: str
    levels: tuple  # ints 1..5 and/or special role strings
    chain: KinematicChain | None = None
    target: str | None = None  # wheel module or joint the role is pinned to

    def __post_init__(self):
        for lv in self.levels:
            if lv not in STACK_LEVELS and lv not in SPECIAL_ROLES:
                raise DescriptionError(f"node {self.node_id}: unknown level {lv!r}")
        if self.chain is None and any(lv in (1, 2, 3) for lv in self.levels):
            raise DescriptionError(f"node {self.node_id}: levels 1-3 require a kinematic chain")


def _port_owner(port: str) -> str:
    if "." not in port:
        raise DescriptionError(f"attachment endpoint {port!r} must be '<module>.<port>'")
    return port.split(".", 1)[0]


def _parse_joint(obj, module_id):
    try:
        return JointSpec(
            name=str(obj["name"]),
            axis=tuple(float(a) for a in obj["axis"]),
            kind=str(obj.get("kind", "revolute")),
            limits=tuple(float(x) for x in obj.get("limits", (-2.967, 2.967))),
            v_max=float(obj.get("v_max", V_MAX_DEFAULT)),
            link_length=float(obj.get("link_length", 0.0)),
        )
    except KeyError as e:
        raise DescriptionError(f"module {module_id}: joint missing field {e}") from None


def parse_description(text, allow_forest: bool = False) -> RobotDescription:
    """Parse and validate a JSON robot description.

    Raises DescriptionError with line/column on malformed JSON, and on
    duplicate ids, dangling attachment endpoints, fixture reuse, cycles
    or (unless allow_forest) a disconnected assembly. Chain derivation
    is deterministic: the tree root is the description's "root" module
    if given, else the lexicographically smallest Body, else the first
    Limb in document order.
    """
    if isinstance(text, (dict, list)):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise DescriptionError(f"syntax error: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(doc, dict):
        raise DescriptionError("description must be a JSON object")

    raw_modules = doc.get("modules", [])
    if not raw_modules:
        raise DescriptionError("no modules")

    modules = []
    seen = set()
    for obj in raw_modules:
        mid = str(obj["id"])
        if mid in seen:
            raise DescriptionError(f"duplicate module id {mid!r}")
        seen.add(mid)
        kind = str(obj["kind"])
        joints = tuple(_parse_joint(j, mid) for j in obj.get("joints", ()))
        fixtures = tuple(str(f) for f in obj.get("fixtures", ()))
        modules.append(
            ModuleSpec(
                id=mid,
                kind=kind,
                joints=joints,
                fixtures=fixtures,
                motor_count=int(obj.get("motor_count", MOTORS_PER_KIND.get(kind, 0))),
            )
        )
    modules = tuple(modules)
    by_id = {m.id: m for m in modules}

    grippers = set()
    fixtures = set()
    for m in modules:
        grippers.update(m.gripper_ports)
        fixtures.update(m.fixture_ports)

    attachments = []
    used_fixtures = set()
    used_grippers = set()
    for pair in doc.get("attachments", ()):
        a, b = (str(pair[0]), str(pair[1]))
        for port in (a, b):
            if _port_owner(port) not in by_id:
                raise DescriptionError(f"dangling attachment endpoint {port!r}")
        if a in grippers and b in fixtures:
            g, f = a, b
        elif b in grippers and a in fixtures:
            g, f = b, a
        else:
            raise DescriptionError(f"attachment {pair!r} must pair one gripper with one grapple fixture")
        if f in used_fixtures:
            raise DescriptionError(f"fixture {f!r} used more than once")
        if g in used_grippers:
            raise DescriptionError(f"gripper {g!r} used more than once")
        used_fixtures.add(f)
        used_grippers.add(g)
        attachments.append((g, f))
    attachments = tuple(attachments)

    # Attachment graph over modules: tree unless allow_forest.
    adjacency = {m.id: [] for m in modules}
    for g, f in attachments:
        ga, fa = _port_owner(g), _port_owner(f)
        if ga == fa:
            raise DescriptionError(f"module {ga!r} attached to itself")
        adjacency[ga].append((fa, g))
        adjacency[fa].append((ga, g))
    if len(attachments) >= len(modules) and modules:
        raise DescriptionError("cyclic assembly")

    root = doc.get("root")
    if root is not None and root not in by_id:
        raise DescriptionError(f"root module {root!r} not in description")

    order = _validate_acyclic_and_connected(adjacency, allow_forest)

    desc = RobotDescription(
        name=str(doc.get("name", "")),
        modules=modules,
        attachments=attachments,
        root=root,
    )
    chains = _derive_chains(desc, adjacency, order)
    return replace(desc, chains=chains)


def _validate_acyclic_and_connected(adjacency, allow_forest):
    """DFS over the module graph; returns a deterministic visit order."""
    visited = {}
    order = []
    for start in adjacency:  # insertion order == document order
        if start in visited:
            continue
        stack = [(start, None)]
        visited[start] = None
        component = [start]
        while stack:
            node, parent_edge = stack.pop()
            for neighbor, via in sorted(adjacency[node]):
                if via == parent_edge:
                    continue
                if neighbor in visited:
                    raise DescriptionError("cyclic assembly")
                visited[neighbor] = node
                component.append(neighbor)
                stack.append((neighbor, via))
        order.append(component)
    if not allow_forest and len(order) > 1:
        raise DescriptionError("assembly is not connected (attachment graph has separate components)")
    return order


def _tree_root(desc: RobotDescription, component) -> str:
    if desc.root is not None and desc.root in component:
        return desc.root
    bodies = sorted(m for m in component if desc.module(m).kind == "Body")
    if bodies:
        return bodies[0]
    for m in component:  # document order
        if desc.module(m).kind == "Limb":
            return m
    return component[0]


def _derive_chains(desc, adjacency, components):
    """One chain per Limb, oriented with its base toward the tree root."""
    chains = {}
    for component in components:
        root = _tree_root(desc, component)
        parent = {root: None}
        queue = [root]
        while queue:
            node = queue.pop(0)
            for neighbor, via in sorted(adjacency[node]):
                if neighbor not in parent:
                    parent[neighbor] = (node, via)
                    queue.append(neighbor)
        for mid in component:
            module = desc.module(mid)
            if module.kind != "Limb":
                continue
            reversed_chain = False
            if parent.get(mid) is not None:
                _, via_gripper = parent[mid]
                # via_gripper is the limb gripper pointing toward the root
                if via_gripper == f"{mid}.gripper2":
                    reversed_chain = True
            chains[mid] = _limb_chain(module, reversed_chain)
    return chains


def _limb_chain(module: ModuleSpec, reverse: bool) -> KinematicChain:
    joints = module.joints
    if not reverse:
        return KinematicChain(
            root_frame=f"{module.id}.gripper1",
            joints=joints,
            tip_frame=f"{module.id}.gripper2",
            base_offset=0.0,
        )
    lengths = [j.link_length for j in joints]
    rev = []
    for i, j in enumerate(reversed(joints)):
        idx = len(joints) - 1 - i
        new_len = lengths[idx - 1] if idx > 0 else 0.0
        rev.append(replace(j, link_length=new_len))
    return KinematicChain(
        root_frame=f"{module.id}.gripper2",
        joints=tuple(rev),
        tip_frame=f"{module.id}.gripper1",
        base_offset=lengths[-1],
    )


def serialize_description(desc: RobotDescription) -> str:
    """Serialize back to the canonical JSON document form."""
    doc = {
        "name": desc.name,
        "modules": [
            {
                "id": m.id,
                "kind": m.kind,
                "joints": [
                    {
                        "name": j.name,
                        "axis": list(j.axis),
                        "kind": j.kind,
                        "limits": list(j.limits),
                        "v_max": j.v_max,
                        "link_length": j.link_length,
                    }
                    for j in m.joints
                ],
                "fixtures": list(m.fixtures),
            }
            for m in desc.modules
        ],
        "attachments": [list(pair) for pair in desc.attachments],
    }
    if desc.root is not None:
        doc["root"] = desc.root
    return json.dumps(doc, indent=2)


def motor_count(desc: RobotDescription) -> int:
    """Total motor inventory of the assembly."""
    return sum(m.motor_count for m in desc.modules)


def chain_for_node(desc: RobotDescription, node_id: str, role_table: dict) -> NodeRole:
    """Resolve the role and (for levels 1-3) the kinematic chain of one node.

    Pure function of (desc, node_id, role_table); the role table stands in
    for the per-computer identity variable set at launch time.
    """
    if node_id not in role_table:
        raise UnknownNodeError(f"unknown node id {node_id!r}")
    entry = role_table[node_id]
    levels = tuple(entry.get("levels", ()))
    chain = None
    chain_id = entry.get("chain")
    if chain_id is not None:
        if chain_id not in desc.chains:
            raise DescriptionError(f"node {node_id!r}: no chain for module {chain_id!r}")
        chain = desc.chains[chain_id]
    if chain is None and any(lv in (1, 2, 3) for lv in levels):
        raise DescriptionError(f"node {node_id!r}: role requires a chain but none assigned")
    return NodeRole(node_id=node_id, levels=levels, chain=chain, target=entry.get("wheel") or entry.get("joint"))


# ---------------------------------------------------------------------------
# Canonical module builders used by scenarios and tests.

def canonical_limb_joints(prefix: str) -> tuple[JointSpec, ...]:
    """Roll-pitch alternating 7-DOF limb, 1.55 m tip to tip."""
    axes = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    return tuple(
        JointSpec(
            name=f"{prefix}.j{i + 1}",
            axis=axes[i % 2],
            link_length=LIMB_LINK_LENGTHS[i],
        )
        for i in range(7)
    )


def limb_module(module_id: str) -> dict:
    return {
        "id": module_id,
        "kind": "Limb",
        "joints": [
            {
                "name": f"{module_id}.j{i + 1}",
                "axis": [1.0, 0.0, 0.0] if i % 2 == 0 else [0.0, 1.0, 0.0],
                "kind": "revolute",
                "limits": [-2.967, 2.967],
                "v_max": V_MAX_DEFAULT,
                "link_length": LIMB_LINK_LENGTHS[i],
            }
            for i in range(7)
        ],
        "fixtures": [],
    }


def wheel_module(module_id: str) -> dict:
    return {"id": module_id, "kind": "Wheel", "joints": [], "fixtures": ["fixture1", "fixture2"]}


def body_module(module_id: str) -> dict:
    return {
        "id": module_id,
        "kind": "Body",
        "joints": [],
        "fixtures": ["fixture1", "fixture2", "fixture3", "fixture4"],
    }


def minimal_description(name="minimal") -> RobotDescription:
    """1 Limb + 1 Wheel, the smallest mobile assembly (11 motors)."""
    return parse_description(
        {
            "name": name,
            "modules": [limb_module("limb1"), wheel_module("wheel1")],
            "attachments": [["limb1.gripper2", "wheel1.fixture1"]],
        }
    )


def vehicle_description(name="vehicle") -> RobotDescription:
    """1 Limb bridging 2 Wheels."""
    return parse_description(
        {
            "name": name,
            "modules": [limb_module("limb1"), wheel_module("wheel1"), wheel_module("wheel2")],
            "attachments": [
                ["limb1.gripper1", "wheel1.fixture1"],
                ["limb1.gripper2", "wheel2.fixture1"],
            ],
        }
    )


def dragon_description(name="dragon") -> RobotDescription:
    """Two minimal assemblies connected in series (22 motors)."""
    return parse_description(
        {
            "name": name,
            "modules": [
                limb_module("limb1"),
                wheel_module("wheel1"),
                limb_module("limb2"),
                wheel_module("wheel2"),
            ],
            "attachments": [
                ["limb1.gripper2", "wheel1.fixture1"],
                ["limb2.gripper1", "wheel1.fixture2"],
                ["limb2.gripper2", "wheel2.fixture1"],
            ],
        }
    )


def tricycle_description(name="tricycle") -> RobotDescription:
    """Three minimal assemblies in parallel on one Body (33 motors)."""
    modules = [body_module("body1")]
    attachments = []
    for i in (1, 2, 3):
        modules += [limb_module(f"limb{i}"), wheel_module(f"wheel{i}")]
        attachments.append([f"limb{i}.gripper1", f"body1.fixture{i}"])
        attachments.append([f"limb{i}.gripper2", f"wheel{i}.fixture1"])
    return parse_description({"name": name, "modules": modules, "attachments": attachments})
