"""
Bench Service - Timing of analytic queries against the load-flow oracle.

Each method is timed as the median of N repetitions after warm-up runs,
with time.perf_counter. Only ratios between methods are meaningful.
"""

import logging
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

from pvsa.config import settings
from pvsa.exceptions import UsageError
from pvsa.models.scenario import DeterministicScenario, StochasticScenario
from pvsa.services.covariance_service import build_covariance
from pvsa.services.feeder_service import FeederService
from pvsa.services.loadflow_service import LoadFlowService
from pvsa.services.montecarlo_service import MonteCarloService
from pvsa.services.pvsa_service import PvsaService
from pvsa.services.vsa_service import VsaService

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ("case", "method", "seconds")


@dataclass(frozen=True)
class BenchCase:
    feeder: str
    deterministic: str
    stochastic: str


BENCH_CASES: Dict[str, BenchCase] = {
    "ieee37": BenchCase("ieee37", "table1", "odd-nodes"),
    "ieee123": BenchCase("ieee123", "123-seven-actors", "123-node10"),
}


def median_time(fn: Callable[[], object], repetitions: int, warmups: int) -> float:
    for _ in range(warmups):
        fn()
    samples = []
    for _ in range(repetitions):
        started = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - started)
    return statistics.median(samples)


class BenchService:
    def __init__(
        self,
        repetitions: Optional[int] = None,
        warmups: Optional[int] = None,
        mc_samples: Optional[int] = None,
        jobs: int = 1,
        seed: Optional[int] = None,
        feeder_service: Optional[FeederService] = None,
    ):
        self.repetitions = repetitions or settings.bench_repetitions
        self.warmups = settings.bench_warmups if warmups is None else warmups
        self.mc_samples = mc_samples or settings.bench_mc_samples
        self.jobs = jobs
        self.seed = settings.default_seed if seed is None else seed
        self.feeders = feeder_service or FeederService()

    def run_case(self, name: str) -> List[dict]:
        case = BENCH_CASES.get(name)
        if case is None:
            raise UsageError(f"no bench case {name!r}; choose from {', '.join(BENCH_CASES)}")

        graph, loads = self.feeders.load_feeder(case.feeder)
        deterministic = self.feeders.load_scenario(case.deterministic, graph)
        stochastic = self.feeders.load_scenario(case.stochastic, graph)
        if not isinstance(deterministic, DeterministicScenario) or not isinstance(stochastic, StochasticScenario):
            raise UsageError(f"bench case {name} needs one deterministic and one stochastic scenario")

        loadflow = LoadFlowService()
        base = loadflow.solve(graph, loads)
        covariance = build_covariance(graph, stochastic)
        observation = stochastic.observation
        query_bus = deterministic.observation.bus if deterministic.observation else observation.bus

        # Precomputation: shared-path impedances, operating point and actor coefficients.
        vsa = VsaService(graph, base)
        pvsa = PvsaService(graph, base)
        prepared = vsa.prepare(deterministic)
        mc = MonteCarloService(graph, loads, base, loadflow, jobs=self.jobs)

        methods = {
            "analytic_query": lambda: vsa.query(prepared, query_bus),
            "oracle_solve": lambda: loadflow.solve(graph, loads),
            "distribution_fit": lambda: pvsa.fit(covariance, observation.bus, observation.phase).violation_probability(
                settings.default_threshold_pu
            ),
            "mc_oracle": lambda: mc.delta_v_samples(
                covariance, observation.bus, observation.phase, self.mc_samples, self.seed, "oracle"
            ),
        }

        rows = []
        for method, fn in methods.items():
            seconds = median_time(fn, self.repetitions, self.warmups)
            logger.info(f"bench {name}/{method}: {seconds:.6f}s")
            rows.append({"case": name, "method": method, "seconds": seconds})
        return rows

    def run(self, cases: Sequence[str] = ("ieee37", "ieee123")) -> List[dict]:
        rows: List[dict] = []
        for name in cases:
            rows.extend(self.run_case(name))
        return rows
