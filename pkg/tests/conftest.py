import functools

import pytest

from mmcsim import ControlParams, ConverterParams, DetectorConfig, FaultSpec, simulate

ACCEPTANCE_LINES = {}


@functools.lru_cache(maxsize=None)
def cached_run(conv=ConverterParams(), ctrl=ControlParams(), det=DetectorConfig(), fault=None,
               t_end=0.3, decim=1):
    """Simulations shared between test modules; arguments are frozen dataclasses."""
    return simulate(conv, ctrl, det, fault, t_end=t_end, decim=decim)


def fault_run(fault_type, injection, sm_index=1, conv=ConverterParams(), decim=1):
    det = DetectorConfig(injection_enabled=injection)
    return cached_run(conv, ControlParams(), det, FaultSpec(sm_index=sm_index, fault_type=fault_type),
                      0.3, decim)


@pytest.fixture
def record_criterion():
    def _record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
