"""Custom model factories loaded through ``model.factory`` in CLI tests."""
import dataclasses

from robust_cbf.model import ScenarioModel, make_scenario_model


def good(n=2):
    return make_scenario_model("attract-repel", "ring", n, {"goal": [0.0] * n}, {"radius": 0.5})


def corrupted(n=2):
    base = good(n)

    def jets(xA, xR):
        j = base.model_fn(xA, xR)
        return dataclasses.replace(j, dG_dxR=2.0 * j.dG_dxR)

    return ScenarioModel(n, base.p, jets, base.barrier_fn, "corrupted")
