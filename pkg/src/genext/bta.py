"""
Binding-time analysis by forward slicing.

The dependence graph is a networkx DiGraph over instruction sites plus two
kinds of pseudo-node: one per bound input register and one per memory
region. Every edge carries a ``kinds`` set drawn from data, memory, region
and control.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

import networkx as nx

from genext.ir import (
    REGISTERS,
    BindingTime,
    Instruction,
    Opcode,
    Program,
    RegionClass,
    cfg,
)

logger = logging.getLogger(__name__)

DATA = "data"
MEMORY = "memory"
REGION = "region"
CONTROL = "control"

EXIT = "__exit__"


@dataclass(frozen=True, order=True)
class Site:
    block: str
    index: int

    def __str__(self) -> str:
        return f"{self.block}:{self.index}"


@dataclass(frozen=True, order=True)
class InputNode:
    reg: str

    def __str__(self) -> str:
        return f"input:{self.reg}"


@dataclass(frozen=True, order=True)
class RegionNode:
    name: str

    def __str__(self) -> str:
        return f"region:{self.name}"


Definition = Site | InputNode
Node = Site | InputNode | RegionNode

PointsTo = frozenset[str]


@dataclass
class DependenceGraph:
    program: Program
    graph: nx.DiGraph
    reaching: dict[Site, dict[str, frozenset[Definition]]]
    region_targets: dict[Site, frozenset[str]]
    ipdom: dict[str, str]

    def instruction(self, site: Site) -> Instruction:
        return self.program.block(site.block).instructions[site.index]

    def edges(self, kind: str) -> list[tuple[Node, Node]]:
        return [(u, v) for u, v, kinds in self.graph.edges(data="kinds") if kind in kinds]

    def predecessors(self, node: Node, kinds: Iterable[str]) -> list[Node]:
        wanted = set(kinds)
        return [u for u in self.graph.predecessors(node) if self.graph.edges[u, node]["kinds"] & wanted]

    def sites(self) -> list[Site]:
        return sorted(n for n in self.graph.nodes if isinstance(n, Site))


@dataclass
class BtaResult:
    classification: dict[Site, BindingTime]
    lifted: frozenset[Definition]
    branch_class: dict[Site, BindingTime]
    region_targets: dict[Site, frozenset[str]]
    delayed_regions: frozenset[str]
    supplied_base: frozenset[Site]
    live_in: dict[str, frozenset[str]] = field(default_factory=dict)

    def is_delayed(self, site: Site) -> bool:
        return self.classification[site] is BindingTime.DELAYED

    def is_lifted(self, node: Definition) -> bool:
        return node in self.lifted

    @property
    def delayed(self) -> frozenset[Site]:
        return frozenset(s for s, c in self.classification.items() if c is BindingTime.DELAYED)


def _sites(p: Program) -> list[tuple[Site, Instruction]]:
    return [
        (Site(block.label, index), instr)
        for block in p.blocks
        for index, instr in enumerate(block.instructions)
    ]


def _link(g: nx.DiGraph, u: Node, v: Node, kind: str) -> None:
    if g.has_edge(u, v):
        g.edges[u, v]["kinds"].add(kind)
    else:
        g.add_edge(u, v, kinds={kind})


def _predecessor_map(p: Program) -> dict[str, list[str]]:
    preds: dict[str, list[str]] = {b.label: [] for b in p.blocks}
    for label, succs in cfg(p).items():
        for succ in succs:
            preds[succ].append(label)
    return preds


def _forward_fixpoint(p: Program, entry_state, transfer, join):
    """Iterate a forward dataflow problem over blocks; returns block-entry states."""
    preds = _predecessor_map(p)
    successors = cfg(p)
    state_in = {b.label: None for b in p.blocks}
    state_in[p.entry] = entry_state
    worklist = deque([p.entry])
    state_out = {}
    while worklist:
        label = worklist.popleft()
        incoming = [state_out[q] for q in preds[label] if q in state_out]
        if label == p.entry:
            incoming.append(entry_state)
        merged = join(incoming)
        state_in[label] = merged
        out = transfer(p.block(label), merged)
        if state_out.get(label) != out:
            state_out[label] = out
            worklist.extend(s for s in successors[label] if s not in worklist)
    return state_in


def _reaching_definitions(p: Program) -> dict[Site, dict[str, frozenset[Definition]]]:
    """For every site, the definitions of each used register that reach it."""
    entry = {b.target: frozenset({InputNode(b.target)}) for b in p.input_spec if b.is_register}

    def join(states):
        merged: dict[str, frozenset[Definition]] = {}
        for state in states:
            for reg, defs in state.items():
                merged[reg] = merged.get(reg, frozenset()) | defs
        return merged

    def transfer(block, state):
        state = dict(state)
        for index, instr in enumerate(block.instructions):
            for reg in instr.defs():
                state[reg] = frozenset({Site(block.label, index)})
        return state

    state_in = _forward_fixpoint(p, entry, transfer, join)
    reaching: dict[Site, dict[str, frozenset[Definition]]] = {}
    for block in p.blocks:
        state = dict(state_in[block.label] or {})
        for index, instr in enumerate(block.instructions):
            site = Site(block.label, index)
            reaching[site] = {reg: state.get(reg, frozenset()) for reg in instr.uses()}
            for reg in instr.defs():
                state[reg] = frozenset({site})
    return reaching


def _points_to(p: Program) -> dict[Site, frozenset[str]]:
    """
    The regions each load/store may touch.

    Only ``&region`` constants and hinted register inputs carry a region;
    arithmetic keeps the regions of its operands. An access through a value
    with no known region may touch any region.
    """
    everything = frozenset(r.name for r in p.regions)
    entry: dict[str, PointsTo] = {}
    for binding in p.input_spec:
        if binding.is_register and binding.points_to:
            entry[binding.target] = frozenset({binding.points_to})

    def evaluate(instr: Instruction, state: dict[str, PointsTo]) -> None:
        op = instr.opcode
        if op is Opcode.CONST:
            state[instr.dest] = frozenset({instr.symbol[1:]}) if instr.symbol else frozenset()
        elif op is Opcode.MOV:
            state[instr.dest] = state.get(instr.src, frozenset()) if isinstance(instr.src, str) else frozenset()
        elif op is Opcode.LOAD:
            state[instr.dest] = frozenset()
        elif instr.defs():
            value = state.get(instr.dest, frozenset())
            if isinstance(instr.src, str):
                value |= state.get(instr.src, frozenset())
            state[instr.dest] = value

    def join(states):
        merged: dict[str, PointsTo] = {}
        for state in states:
            for reg, value in state.items():
                merged[reg] = merged.get(reg, frozenset()) | value
        return merged

    def transfer(block, state):
        state = dict(state)
        for instr in block.instructions:
            evaluate(instr, state)
        return state

    state_in = _forward_fixpoint(p, entry, transfer, join)
    targets: dict[Site, frozenset[str]] = {}
    for block in p.blocks:
        state = dict(state_in[block.label] or {})
        for index, instr in enumerate(block.instructions):
            if instr.addr is not None:
                value = state.get(instr.addr.base, frozenset())
                targets[Site(block.label, index)] = value if value else everything
            evaluate(instr, state)
    return targets


def postdominators(p: Program) -> dict[str, str]:
    """Immediate postdominator of every block, with a virtual exit node."""
    reverse = nx.DiGraph()
    reverse.add_node(EXIT)
    for label, succs in cfg(p).items():
        reverse.add_node(label)
        for succ in succs:
            reverse.add_edge(succ, label)
        if not succs:
            reverse.add_edge(EXIT, label)
    # Blocks that never reach a halt hang off the exit so every block has a postdominator.
    reachable = nx.descendants(reverse, EXIT)
    for label in p.labels:
        if label not in reachable:
            reverse.add_edge(EXIT, label)
            reachable |= nx.descendants(reverse, EXIT)
    ipdom = dict(nx.immediate_dominators(reverse, EXIT))
    ipdom.pop(EXIT, None)
    return ipdom


def _control_dependences(p: Program, ipdom: dict[str, str]) -> dict[str, set[str]]:
    """Map each branching block to the blocks control-dependent on it."""
    dependents: dict[str, set[str]] = {}
    for label, succs in cfg(p).items():
        if len(succs) < 2:
            continue
        stop = ipdom.get(label, EXIT)
        for succ in succs:
            runner = succ
            while runner != stop and runner != EXIT:
                dependents.setdefault(label, set()).add(runner)
                runner = ipdom.get(runner, EXIT)
    return dependents


def build_dependence_graph(p: Program) -> DependenceGraph:
    """
    Build the dependence graph of a valid program.

    Data edges follow reaching definitions of registers; memory edges join a
    store to every load sharing a target region; region edges tie every
    access to its region node in both directions; control edges run from a
    conditional branch to the instructions it controls.
    """
    g = nx.DiGraph()
    sites = _sites(p)
    for site, _ in sites:
        g.add_node(site)
    for binding in p.input_spec:
        if binding.is_register:
            g.add_node(InputNode(binding.target))
    for region in p.regions:
        g.add_node(RegionNode(region.name))

    reaching = _reaching_definitions(p)
    for site, _ in sites:
        for defs in reaching[site].values():
            for definition in defs:
                _link(g, definition, site, DATA)

    targets = _points_to(p)
    stores = [(s, i) for s, i in sites if i.opcode is Opcode.STORE]
    loads = [(s, i) for s, i in sites if i.opcode is Opcode.LOAD]
    for store, _ in stores:
        for load, _ in loads:
            if targets[store] & targets[load]:
                _link(g, store, load, MEMORY)
    for site, regions in targets.items():
        for name in regions:
            _link(g, site, RegionNode(name), REGION)
            _link(g, RegionNode(name), site, REGION)

    ipdom = postdominators(p)
    for branch, blocks in _control_dependences(p, ipdom).items():
        branch_site = Site(branch, len(p.block(branch).instructions) - 1)
        for label in blocks:
            for index in range(len(p.block(label).instructions)):
                _link(g, branch_site, Site(label, index), CONTROL)

    logger.debug(
        "Dependence graph for %s: %d nodes, %d edges", p.name, g.number_of_nodes(), g.number_of_edges()
    )
    return DependenceGraph(program=p, graph=g, reaching=reaching, region_targets=targets, ipdom=ipdom)


def _closure(g: DependenceGraph, start: Iterable[Node], kinds: set[str]) -> set[Node]:
    seen = set(start)
    queue = deque(seen)
    while queue:
        node = queue.popleft()
        for succ in g.graph.successors(node):
            if succ not in seen and g.graph.edges[node, succ]["kinds"] & kinds:
                seen.add(succ)
                queue.append(succ)
    return seen


def seed_nodes(p: Program) -> list[Node]:
    """Graph nodes for the delayed input bindings."""
    seeds: list[Node] = []
    for binding in p.input_spec:
        if binding.cls is BindingTime.DELAYED:
            seeds.append(InputNode(binding.target) if binding.is_register else RegionNode(binding.target))
    return seeds


def _slice_nodes(g: DependenceGraph, seeds: Iterable[Node]) -> set[Node]:
    flow = {DATA, MEMORY, REGION}
    nodes = _closure(g, seeds, flow)
    while True:
        branches = [n for n in nodes if isinstance(n, Site) and g.instruction(n).opcode is Opcode.JZ]
        tainted = _closure(g, branches, {CONTROL})
        observable = {
            n for n in tainted if isinstance(n, Site) and n not in nodes and g.instruction(n).is_observable
        }
        if not observable:
            return nodes
        nodes |= _closure(g, observable, flow)


def forward_slice(g: DependenceGraph, seeds: Iterable[Node]) -> set[Site]:
    """
    Instructions that depend on the seed nodes.

    Args:
        g: The dependence graph.
        seeds: InputNode / RegionNode entries for the delayed inputs.

    Returns:
        The delayed instruction sites.
    """
    return {n for n in _slice_nodes(g, seeds) if isinstance(n, Site)}


def live_registers(p: Program) -> dict[str, frozenset[str]]:
    """Registers live on entry to each block."""
    use: dict[str, set[str]] = {}
    kill: dict[str, set[str]] = {}
    for block in p.blocks:
        used: set[str] = set()
        defined: set[str] = set()
        for instr in block.instructions:
            used |= set(instr.uses()) - defined
            defined |= set(instr.defs())
        use[block.label], kill[block.label] = used, defined

    successors = cfg(p)
    live_in = {b.label: frozenset() for b in p.blocks}
    changed = True
    while changed:
        changed = False
        for block in reversed(p.blocks):
            out = set().union(*(live_in[s] for s in successors[block.label]))
            new = frozenset(use[block.label] | (out - kill[block.label]))
            if new != live_in[block.label]:
                live_in[block.label] = new
                changed = True
    return live_in


def classify(p: Program, g: DependenceGraph) -> BtaResult:
    """
    Classify every instruction as supplied or delayed and find lifted definitions.

    A supplied definition is lifted when it reaches a use in a delayed or
    observable instruction; register inputs take part through their input
    nodes.
    """
    nodes = _slice_nodes(g, seed_nodes(p))
    classification = {
        site: BindingTime.DELAYED if site in nodes else BindingTime.SUPPLIED for site in g.sites()
    }
    bindings = {b.target: b for b in p.input_spec if b.is_register}

    def supplied(definition: Definition) -> bool:
        if isinstance(definition, InputNode):
            return bindings[definition.reg].cls is BindingTime.SUPPLIED
        return classification[definition] is BindingTime.SUPPLIED

    lifted: set[Definition] = set()
    supplied_base: set[Site] = set()
    for site, cls in classification.items():
        instr = g.instruction(site)
        reaching = g.reaching[site]
        if cls is BindingTime.DELAYED or instr.is_observable:
            for defs in reaching.values():
                lifted.update(d for d in defs if supplied(d))
        if cls is BindingTime.DELAYED and instr.addr is not None:
            if all(supplied(d) for d in reaching[instr.addr.base]):
                supplied_base.add(site)

    branch_class = {s: c for s, c in classification.items() if g.instruction(s).opcode is Opcode.JZ}
    delayed_regions = frozenset(n.name for n in nodes if isinstance(n, RegionNode))
    result = BtaResult(
        classification=classification,
        lifted=frozenset(lifted),
        branch_class=branch_class,
        region_targets=g.region_targets,
        delayed_regions=delayed_regions,
        supplied_base=frozenset(supplied_base),
        live_in=live_registers(p),
    )
    logger.info(
        "BTA %s: %d delayed of %d instructions, %d lifted",
        p.name,
        len(result.delayed),
        len(classification),
        len(result.lifted),
    )
    return result


def analyze(p: Program) -> tuple[DependenceGraph, BtaResult]:
    g = build_dependence_graph(p)
    return g, classify(p, g)


def check_congruence(p: Program, g: DependenceGraph, result: BtaResult) -> list[str]:
    """Static congruence diagnostics; empty when the partition is consistent."""
    problems = []
    for site, cls in result.classification.items():
        if cls is not BindingTime.SUPPLIED:
            continue
        for pred in g.predecessors(site, {DATA, MEMORY, REGION}):
            if isinstance(pred, Site) and result.is_delayed(pred):
                problems.append(f"{site}: supplied instruction depends on delayed {pred}")
            elif isinstance(pred, InputNode) and p.binding(pred.reg).cls is BindingTime.DELAYED:
                problems.append(f"{site}: supplied instruction reads delayed input {pred.reg}")
            elif isinstance(pred, RegionNode) and pred.name in result.delayed_regions:
                problems.append(f"{site}: supplied access to residual region {pred.name}")
    for region in p.regions:
        if region.cls is RegionClass.SUPPLIED and region.name in result.delayed_regions:
            culprits = sorted(
                s for s in result.delayed if region.name in result.region_targets.get(s, frozenset())
            )
            where = ", ".join(str(s) for s in culprits)
            problems.append(f"region {region.name}: supplied-input region accessed by delayed code at {where}")
    return problems


def format_classification(p: Program, result: BtaResult) -> str:
    """One ``block:index opcode CLASS [LIFTED]`` line per instruction."""
    lines = []
    for block in p.blocks:
        for index, instr in enumerate(block.instructions):
            site = Site(block.label, index)
            line = f"{site} {instr.opcode} {result.classification[site].name}"
            if site in result.lifted:
                line += " LIFTED"
            lines.append(line)
    for reg in REGISTERS:
        if InputNode(reg) in result.lifted:
            lines.append(f"input:{reg} LIFTED")
    return "\n".join(lines) + "\n"
