import pytest

from sparse_fdi.acpf import newton_power_flow
from sparse_fdi.netmodel import bundled_case_path, load_case, parse_case
from sparse_fdi.scenario import IEEE57_BOUNDARY, IEEE57_ZONE
from sparse_fdi.zone import build_zone

TWO_BUS = """
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
	1	3	10	5	0	0	1	1.0	0	230	1	1.1	0.9;
	2	1	50	20	0	0	1	1.0	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1.0	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
];
"""

# slack - boundary - zero-injection interior - interior load on the target leg
FOUR_BUS = """
function mpc = four_bus
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1.0	0	138	1	1.1	0.9;
	2	1	40	10	0	0	1	1.0	0	138	1	1.1	0.9;
	3	1	0	0	0	0	1	1.0	0	138	1	1.1	0.9;
	4	1	30	12	0	0	1	1.0	0	138	1	1.1	0.9;
];
mpc.gen = [
	1	70	0	100	-100	1.02	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.08	0.02	0	0	0	0	0	1	-360	360;
	2	3	0.02	0.12	0.01	0	0	0	0	0	1	-360	360;
	3	4	0.015	0.10	0.01	0	0	0	0	0	1	-360	360;
	2	4	0.03	0.20	0.0	0	0	0	0	0	1	-360	360;
];
"""

SIX_BUS = """
function mpc = six_bus
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1.0	0	138	1	1.1	0.9;
	2	2	20	5	0	0	1	1.0	0	138	1	1.1	0.9;
	3	1	0	0	0	0	1	1.0	0	138	1	1.1	0.9;
	4	1	25	8	0	0	1	1.0	0	138	1	1.1	0.9;
	5	1	0	0	0	0	1	1.0	0	138	1	1.1	0.9;
	6	1	30	10	0	3	1	1.0	0	138	1	1.1	0.9;
];
mpc.gen = [
	1	40	0	100	-100	1.03	100	1	200	0;
	2	40	0	100	-100	1.01	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.06	0.02	0	0	0	0	0	1	-360	360;
	2	3	0.02	0.10	0.02	0	0	0	0.98	0	1	-360	360;
	3	4	0.02	0.12	0.01	0	0	0	0	0	1	-360	360;
	4	5	0.01	0.09	0.01	0	0	0	0	0	1	-360	360;
	5	6	0.02	0.11	0.01	0	0	0	0	0	1	-360	360;
	3	5	0.03	0.15	0.0	0	0	0	0	0	1	-360	360;
	2	6	0.02	0.13	0.01	0	0	0	0	0	1	-360	360;
];
"""


@pytest.fixture(scope="session")
def case57_text():
    return bundled_case_path().read_text()


@pytest.fixture(scope="session")
def net57():
    return load_case(bundled_case_path())


@pytest.fixture(scope="session")
def base57(net57):
    return newton_power_flow(net57)


@pytest.fixture(scope="session")
def zone57(net57):
    return build_zone(net57, IEEE57_ZONE, IEEE57_BOUNDARY, (23, 24), 3.0)


@pytest.fixture
def two_bus():
    return parse_case(TWO_BUS, "two_bus")


@pytest.fixture(scope="session")
def four_bus():
    return parse_case(FOUR_BUS, "four_bus")


@pytest.fixture(scope="session")
def six_bus():
    return parse_case(SIX_BUS, "six_bus")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
