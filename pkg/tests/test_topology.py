import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iiotnet.topology import (DuplicateId, Link, LinkState, Node, NodeKind, NoFeasiblePath, PortOccupied,
                              Region, Segment, Topology, TopologyError, UnknownEndpoint, UnknownLink)
from oracles import best_path, graph_topology


def triangle(bc_bandwidth=100_000):
    topo = Topology()
    for i in (1, 2, 3):
        topo.add_node(Node(i, NodeKind.SDN_SWITCH, [1, 2]))
    topo.add_link(Link(1, (1, 1), (2, 1), 10, 100_000))
    topo.add_link(Link(2, (2, 2), (3, 1), 10, bc_bandwidth))
    topo.add_link(Link(3, (1, 2), (3, 2), 30, 100_000))
    return topo


def test_add_link_bumps_revision_and_rejects_occupied_port():
    topo = Topology()
    topo.add_node(Node(1, NodeKind.SDN_SWITCH, [1, 2]))
    topo.add_node(Node(2, NodeKind.SDN_SWITCH, [1, 2]))
    rev = topo.revision
    assert topo.add_link(Link(1, (1, 1), (2, 1), 5, 1000)) == 1
    assert topo.revision == rev + 1
    with pytest.raises(PortOccupied):
        topo.add_link(Link(2, (1, 1), (2, 2), 5, 1000))
    with pytest.raises(UnknownEndpoint):
        topo.add_link(Link(3, (1, 9), (2, 2), 5, 1000))
    with pytest.raises(DuplicateId):
        topo.add_node(Node(1, NodeKind.HOST, [1]))


@pytest.mark.parametrize("kw", [dict(latency=0, bandwidth=1), dict(latency=1, bandwidth=0),
                                dict(latency=1, bandwidth=1, jitter_bound=-1)])
def test_link_attribute_invariants(kw):
    with pytest.raises(TopologyError):
        Link(1, (1, 1), (2, 1), **kw)


def test_node_region_and_port_invariants():
    with pytest.raises(TopologyError):
        Node(1, NodeKind.SDN_SWITCH, [1], region=Region.LEGACY)
    with pytest.raises(TopologyError):
        Node(1, NodeKind.LEGACY_SWITCH, [1])
    with pytest.raises(TopologyError):
        Node(1, NodeKind.HOST, [1, 1])


def test_segment_vlan_range():
    with pytest.raises(TopologyError):
        Segment(4095, "x")
    with pytest.raises(TopologyError):
        Segment(10, "x", security_level=4)


def test_set_link_state_reports_previous_and_is_idempotent():
    topo = triangle()
    assert topo.set_link_state(2, LinkState.DOWN) is LinkState.UP
    rev = topo.revision
    assert topo.set_link_state(2, LinkState.DOWN) is LinkState.DOWN
    assert topo.revision == rev
    with pytest.raises(UnknownLink):
        topo.set_link_state(99, LinkState.UP)


def test_triangle_prefers_two_short_hops():
    p = triangle().shortest_feasible_path(1, 3)
    assert p.nodes == (1, 2, 3) and p.latency == 20


def test_triangle_avoids_link_without_residual():
    topo = triangle(bc_bandwidth=1000)
    p = topo.shortest_feasible_path(1, 3, demand=5000)
    assert p.nodes == (1, 3) and p.latency == 30


def test_down_links_are_not_used():
    topo = triangle()
    topo.set_link_state(1, LinkState.DOWN)
    assert topo.shortest_feasible_path(1, 3).nodes == (1, 3)
    topo.set_link_state(3, LinkState.DOWN)
    with pytest.raises(NoFeasiblePath):
        topo.shortest_feasible_path(1, 3)


def test_hosts_are_never_transit_nodes():
    topo = Topology()
    topo.add_node(Node(1, NodeKind.SDN_SWITCH, [1, 2]))
    topo.add_node(Node(2, NodeKind.SDN_SWITCH, [1, 2]))
    topo.add_node(Node(10, NodeKind.HOST, [1, 2]))
    topo.add_link(Link(1, (1, 1), (10, 1), 1, 1000))
    topo.add_link(Link(2, (10, 2), (2, 1), 1, 1000))
    with pytest.raises(NoFeasiblePath):
        topo.shortest_feasible_path(1, 2)


def test_equal_latency_tie_goes_to_smallest_node_sequence():
    # 1-2-4 and 1-3-4 both cost 20
    topo = graph_topology(4, [(1, 3), (3, 4), (1, 2), (2, 4)], [10, 10, 10, 10])
    assert topo.shortest_feasible_path(1, 4).nodes == (1, 2, 4)


def test_disjoint_path_counts():
    ring = graph_topology(4, [(1, 2), (2, 3), (3, 4), (4, 1)], [1] * 4)
    assert ring.disjoint_path_count(1, 3) == 2
    chain = graph_topology(3, [(1, 2), (2, 3)], [1, 1])
    assert chain.disjoint_path_count(1, 3) == 1
    apart = graph_topology(3, [(1, 2)], [1])
    assert apart.disjoint_path_count(1, 3) == 0


def test_attachment_and_host_segment():
    topo = Topology()
    topo.add_node(Node(1, NodeKind.SDN_SWITCH, [1]))
    topo.add_node(Node(10, NodeKind.HOST, [1]))
    topo.add_link(Link(1, (10, 1), (1, 1), 1, 1000))
    topo.add_segment(Segment(20, "cell", member_ports={(1, 1)}))
    assert topo.attachment(10) == (1, 1)
    assert topo.host_segment(10) == 20
    assert topo.attachment(99) is None  # not plugged in


graphs = st.integers(3, 7).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(st.integers(1, n), st.integers(1, n), st.integers(1, 30)).filter(lambda e: e[0] != e[1]),
             max_size=12, unique_by=lambda e: frozenset(e[:2]))))


@given(graphs)
def test_shortest_path_matches_enumeration(g):
    n, edges = g
    topo = graph_topology(n, [e[:2] for e in edges], [e[2] for e in edges])
    for src in range(1, n + 1):
        for dst in range(1, n + 1):
            if src == dst:
                continue
            want = best_path(topo, src, dst)
            if want is None:
                with pytest.raises(NoFeasiblePath):
                    topo.shortest_feasible_path(src, dst)
            else:
                got = topo.shortest_feasible_path(src, dst)
                assert (got.nodes, got.links, got.latency) == want


@given(graphs)
def test_disjoint_paths_match_edge_connectivity(g):
    n, edges = g
    topo = graph_topology(n, [e[:2] for e in edges], [e[2] for e in edges])
    ref = nx.Graph()
    ref.add_nodes_from(range(1, n + 1))
    ref.add_edges_from(e[:2] for e in edges)
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            assert topo.disjoint_path_count(a, b) == nx.edge_connectivity(ref, a, b)
