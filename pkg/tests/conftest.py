import pytest

from transit_rlvr.alert_model import Alert, Event


def make_event(durations_s=(0, 600), texts=None, fine="signal problem", ev_id="e1", forecast_cut=None):
    texts = texts or [f"alert {i}" for i in range(len(durations_s))]
    alerts = [Alert(ev_id, t, x) for t, x in zip(durations_s, texts)]
    return Event.from_alerts(ev_id, alerts, fine, forecast_cut)


@pytest.fixture
def two_alert_event():
    return make_event(
        (1000, 1600),
        ["Northbound R trains are delayed while we address a signal problem.", "R trains: delays cleared."],
    )


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
