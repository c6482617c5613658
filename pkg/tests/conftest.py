import numpy as np
from hypothesis import strategies as st

from stalesgd.datasets import sample_minibatch, split_data
from stalesgd.nn import encode_targets, full_gradient, init_params
from stalesgd.topology import build_mixing_matrix


@st.composite
def connected_graphs(draw, max_nodes=8):
    """Random connected graph: a random spanning tree plus random extra edges."""
    S = draw(st.integers(2, max_nodes))
    order = draw(st.permutations(range(1, S + 1)))
    edges = set()
    for i in range(1, S):
        j = draw(st.integers(0, i - 1))
        u, v = order[i], order[j]
        edges.add((min(u, v), max(u, v)))
    extra = draw(st.lists(st.tuples(st.integers(1, S), st.integers(1, S)), max_size=2 * S))
    edges |= {(min(u, v), max(u, v)) for u, v in extra if u != v}
    return S, sorted(edges)


def random_connected_graph(gen: np.random.Generator, S: int) -> list[tuple[int, int]]:
    order = gen.permutation(np.arange(1, S + 1))
    edges = set()
    for i in range(1, S):
        j = gen.integers(0, i)
        u, v = int(order[i]), int(order[j])
        edges.add((min(u, v), max(u, v)))
    for _ in range(gen.integers(0, 2 * S)):
        u, v = (int(x) for x in gen.integers(1, S + 1, size=2))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def direct_loop(cfg):
    """Decentralized SGD written out longhand from the data and RNG streams."""
    spec, ds = cfg.spec, cfg.dataset
    part = split_data(ds, cfg.S, cfg.seed)
    P = build_mixing_matrix(cfg.model_edges(), cfg.S, cfg.alpha).P if cfg.S > 1 else np.ones((1, 1))
    W = [init_params(spec, cfg.seed) for _ in range(cfg.S)]
    for t in range(cfg.T):
        eta = cfg.schedule(t)
        U = []
        for s in range(cfg.S):
            mb = sample_minibatch(part, s + 1, cfg.B, t, cfg.seed)
            X, labels = ds.columns(mb.indices)
            g = full_gradient(spec, W[s], X, encode_targets(spec, labels))[1] * part.weight(s + 1)
            U.append(W[s] - eta * g)
        new = []
        for s in range(cfg.S):
            acc = 0
            for r in range(cfg.S):
                if P[s, r] != 0.0:
                    acc = acc + P[s, r] * U[r]
            new.append(acc)
        W = new
    return np.stack(W)
