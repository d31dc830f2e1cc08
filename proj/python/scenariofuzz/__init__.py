from ._core import Engine, ScenarioFuzzError, light_phase, scenario_hash

__all__ = ["Engine", "ScenarioFuzzError", "light_phase", "scenario_hash"]
