# ruff: noqa
from .commands import COMMANDS, cmd_continue, cmd_invariant, cmd_moduli, cmd_solve, cmd_verify_form
from .config import RunConfig, parse_config, validate
from .report import CheckResult, RunReport
from .scenarios import CATALOG, Scenario, load_scenario_config, resolve, scenario_config
