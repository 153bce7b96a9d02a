"""
Builds every proxy kind an experiment compares, sharing intermediate
solutions: one Tammes solve feeds Aligned, HCLM and sHCLM.
"""

import logging
from typing import Any, Dict, Iterable, Optional, Tuple

from core.config import ExperimentConfig
from features.dataset import FeatureDataset
from proxies.alignment import binarize, itq_rotation, rotate_proxies
from proxies.assignment import apply_assignment, greedy_assign_with_trace
from proxies.design import learned_proxies_init, random_binary_proxies, random_proxies, tammes_search
from proxies.proxy_set import ProxySet
from proxies.similarity import dataset_similarity

logger = logging.getLogger(__name__)

_NEEDS = {
    "tammes": set(),
    "aligned": {"tammes"},
    "hclm": {"tammes"},
    "shclm": {"tammes", "hclm"},
}


def build_proxy_sets(kinds: Iterable[str], data: FeatureDataset, cfg: ExperimentConfig,
                     similarity: Optional[str] = None, workers: int = 1) -> Tuple[Dict[str, ProxySet], Dict[str, Any]]:
    """
    Produce the requested proxy kinds for the classes (or tags) of `data`.

    Args:
        kinds: Proxy kinds, e.g. ["tammes", "hclm", "shclm"].
        data: Training data; its class count sets C and it supplies the
            similarity for sHCLM.
        cfg: Experiment settings (bits, solver configs, seed).
        similarity: "means" or "cooccur"; the assignment config decides when None.
        workers: Threads for solver restarts.

    Returns:
        (proxy sets by kind, diagnostics: Tammes minimum distance, ITQ trace,
        similarity matrix, assignment objective before/after).
    """
    kinds = list(dict.fromkeys(kinds))
    needed = set(kinds).union(*(_NEEDS.get(kind, set()) for kind in kinds))
    C, d = data.num_classes, cfg.bits
    sets: Dict[str, ProxySet] = {}
    diagnostics: Dict[str, Any] = {}

    if "tammes" in needed:
        solution = tammes_search(C, d, cfg.tammes, workers)
        sets["tammes"] = solution.proxies
        diagnostics["tammes_min_squared_distance"] = solution.min_squared_distance
    if needed & {"aligned", "hclm", "shclm"}:
        gamma, trace = itq_rotation(sets["tammes"], cfg.align, workers)
        diagnostics["alignment_trace"] = trace
        if "aligned" in needed:
            sets["aligned"] = rotate_proxies(gamma, sets["tammes"])
        sets["hclm"] = binarize(gamma, sets["tammes"])
    if "shclm" in needed:
        S = dataset_similarity(data, similarity or cfg.assign.similarity)
        assignment, trace, _ = greedy_assign_with_trace(S, sets["hclm"], cfg.assign, workers)
        sets["shclm"] = apply_assignment(sets["hclm"], assignment)
        diagnostics["similarity"] = S
        diagnostics["assignment_objective"] = (trace[0], trace[-1])
    if "random" in needed:
        sets["random"] = random_proxies(C, d, cfg.seed)
    if "random_binary" in needed:
        sets["random_binary"] = random_binary_proxies(C, d, cfg.seed)
    if "learned" in needed:
        sets["learned"] = learned_proxies_init(C, d, cfg.seed)

    logger.info("Built proxy sets %s for C=%d, d=%d", sorted(sets), C, d)
    return {kind: sets[kind] for kind in kinds}, diagnostics
