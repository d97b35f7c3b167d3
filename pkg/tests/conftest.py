import numpy as np
import pytest

from kalium._kernels import backends
from kalium.records import BeatTemplate

BACKENDS = sorted(backends())


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def gaussian_template(a=0.3, sigma=0.08, center=0.30, fs=500.0, pre=0.3, post=0.6,
                      mean_rr=1.0, qrs=False):
    """Template with a Gaussian T wave at ``center`` s after R and zeros elsewhere."""
    n_pre, n_post = int(round(pre * fs)), int(round(post * fs))
    t = np.arange(-n_pre, n_post + 1) / fs
    wf = a * np.exp(-((t - center) ** 2) / (2 * sigma ** 2))
    if qrs:
        wf = wf + np.exp(-t ** 2 / (2 * 0.01 ** 2)) - 0.25 * np.exp(-(t - 0.03) ** 2 / (2 * 0.01 ** 2))
    return BeatTemplate(waveform=wf, sampling_rate=fs, r_index=n_pre, beats_used=10, mean_rr=mean_rr)


def quiet_config(**kw):
    """Synthetic config without noise, mains or wander."""
    from kalium.synth import SynthConfig

    base = dict(noise_std=0.0, mains_amplitude=0.0, baseline_wander_amplitude=0.0)
    base.update(kw)
    return SynthConfig(**base)


# -- acceptance reporting --------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    if report.failed or (report.when == "call" and number not in _ACCEPTANCE):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _ACCEPTANCE[number] = (title, "FAIL" if report.failed else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict, detail = _ACCEPTANCE[number]
        line = f"criterion {number} {title}: {verdict}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
