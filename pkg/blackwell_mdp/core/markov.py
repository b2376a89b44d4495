"""
Structural analysis of finite Markov chains.

Recurrent classes are the closed strongly connected components of the
positive-probability transition graph, i.e. the sink nodes of its
condensation. The Cesaro limiting matrix is assembled from per-class
stationary distributions and transient absorption probabilities, which
works for periodic chains where matrix powers do not converge.
"""

from dataclasses import dataclass
from typing import List

import networkx as nx
import numpy as np


@dataclass(frozen=True)
class ChainStructure:
    recurrent_classes: List[List[int]]
    transient: List[int]

    @property
    def multichain(self) -> bool:
        return len(self.recurrent_classes) > 1


def transition_graph(matrix: np.ndarray) -> nx.DiGraph:
    """Directed graph with an edge i -> j whenever matrix[i, j] > 0."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(matrix.shape[0]))
    rows, cols = np.nonzero(matrix > 0)
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return graph


def decompose(matrix: np.ndarray) -> ChainStructure:
    graph = transition_graph(matrix)
    condensed = nx.condensation(graph)
    recurrent = []
    for node in sorted(condensed.nodes, key=lambda c: min(condensed.nodes[c]["members"])):
        if condensed.out_degree(node) == 0:
            recurrent.append(sorted(condensed.nodes[node]["members"]))
    closed = {i for members in recurrent for i in members}
    transient = [i for i in range(matrix.shape[0]) if i not in closed]
    return ChainStructure(recurrent_classes=recurrent, transient=transient)


def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible stochastic matrix."""
    n = matrix.shape[0]
    system = np.vstack([matrix.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def limiting_matrix(matrix: np.ndarray, structure: ChainStructure) -> np.ndarray:
    """Cesaro limit P* = lim (1/T) sum_{t<T} P^t."""
    n = matrix.shape[0]
    limit = np.zeros((n, n))
    transient = structure.transient
    if transient:
        q = matrix[np.ix_(transient, transient)]
        fundamental = np.eye(len(transient)) - q
    for members in structure.recurrent_classes:
        pi = stationary_distribution(matrix[np.ix_(members, members)])
        for i in members:
            limit[i, members] = pi
        if transient:
            into = matrix[np.ix_(transient, members)].sum(axis=1)
            absorption = np.linalg.solve(fundamental, into)
            limit[np.ix_(transient, members)] = np.outer(absorption, pi)
    return limit


def expected_absorption_times(matrix: np.ndarray, structure: ChainStructure) -> np.ndarray:
    """Expected number of steps spent in transient states, per starting state."""
    n = matrix.shape[0]
    times = np.zeros(n)
    transient = structure.transient
    if transient:
        q = matrix[np.ix_(transient, transient)]
        times[transient] = np.linalg.solve(np.eye(len(transient)) - q, np.ones(len(transient)))
    return times
