import pytest

_LINES: list[str] = []


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.notes: list[str] = []
        self.verdict: str | None = None

    def note(self, text: str) -> None:
        self.notes.append(text)

    def check(self, ok: bool, detail: str = "") -> None:
        self.verdict = "PASS" if ok else "FAIL"
        if detail:
            self.note(detail)
        assert ok, f"criterion {self.number} failed: {detail}"

    def line(self) -> str:
        extra = f" ({'; '.join(self.notes)})" if self.notes else ""
        return f"{self.verdict or 'FAIL'} criterion {self.number}: {self.title}{extra}"


@pytest.fixture
def criterion(request):
    made = []

    def make(number: int, title: str) -> Criterion:
        c = Criterion(number, title)
        made.append(c)
        return c

    yield make
    for c in made:
        text = c.line()
        _LINES.append(text)
        with request.config.pluginmanager.get_plugin("capturemanager").global_and_fixture_disabled():
            print("\n" + text)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for text in sorted(_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(text)
