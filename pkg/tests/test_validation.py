import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftsearch.environment import EnvironmentSpec
from driftsearch.errors import ContractViolation
from driftsearch.universe import KnowledgeBase
from driftsearch.validation import (
    Checkpoint,
    Origin,
    StackFrame,
    Status,
    ValidationResult,
    is_fixable,
    is_fixed,
    localize_fault,
    missing_module,
    timeout_budget,
)

ENV = EnvironmentSpec("3", (("Theano", "1.0.4"), ("Lasagne", "0.1")))
KB = KnowledgeBase({"theano": frozenset({"Theano"}), "lasagne": frozenset({"Lasagne"}),
                    "yaml": frozenset({"PyYAML", "Theano"})})
S = lambda line=1: StackFrame(Origin.SNIPPET, line)  # noqa: E731
D = lambda pkg, line=1: StackFrame(Origin.DEPENDENCY, line, pkg)  # noqa: E731


def exc(name, message="", trace=None, line=1):
    return ValidationResult(Status.EXCEPTION, name, message, tuple(trace or (S(line),)), line)


def test_result_invariants():
    with pytest.raises(ContractViolation):
        ValidationResult(Status.EXCEPTION, "ImportError", trace=())
    with pytest.raises(ContractViolation):
        ValidationResult(Status.SUCCESS, "ImportError")
    with pytest.raises(ContractViolation):
        ValidationResult(Status.TIMEOUT, snippet_line=-1)
    with pytest.raises(ValueError):
        StackFrame(Origin.DEPENDENCY, 1)
    with pytest.raises(ValueError):
        StackFrame(Origin.SNIPPET, 1, "pkg")


def test_json_round_trip():
    r = ValidationResult(Status.EXCEPTION, "ImportError", "cannot import name 'downsample'",
                         (S(5), D("Lasagne", 6), D("Theano")), 5, (("numpy", "build failed"),))
    assert ValidationResult.from_json(r.to_json()) == r
    wire = {"status": "exception", "exception_name": "ImportError", "message": "m",
            "trace": [{"origin": "dependency", "package": "Lasagne", "line": 6}], "snippet_line": 5,
            "install_failures": []}
    assert ValidationResult.from_json(wire).trace[0].package == "Lasagne"


def test_progress():
    assert ValidationResult.success(4).progress == math.inf
    assert ValidationResult.timeout().progress == 0


def test_is_fixed():
    cp = Checkpoint(exc("ImportError", line=5), "k")
    assert not is_fixed(None, exc("ImportError", line=9))
    assert is_fixed(cp, ValidationResult.success(6))
    assert is_fixed(cp, exc("NameError", line=6))
    assert not is_fixed(cp, exc("ImportError", line=5))
    assert not is_fixed(cp, exc("ImportError", line=2))
    assert not is_fixed(cp, ValidationResult.timeout(9))


@given(st.integers(0, 50), st.integers(0, 50))
def test_is_fixed_is_line_comparison(a, b):
    cp = Checkpoint(ValidationResult(Status.EXCEPTION, "E", trace=(S(),), snippet_line=a), "k")
    fresh = ValidationResult(Status.EXCEPTION, "E", trace=(S(),), snippet_line=b)
    assert is_fixed(cp, fresh) == (b > a)


def test_missing_module():
    assert missing_module(exc("ModuleNotFoundError", "No module named 'sklearn.cross_validation'")) == \
        "sklearn.cross_validation"
    assert missing_module(exc("ImportError", "cannot import name 'downsample' from 'theano.tensor.signal'")) == \
        "theano.tensor.signal"
    assert missing_module(exc("NameError", "name 'x' is not defined")) is None


def test_fixability():
    assert is_fixable(exc("ImportError", "x", (S(5), D("Lasagne", 6), D("Theano"))), ENV)
    assert is_fixable(exc("ImportError", "No module named 'theano.foo'"), ENV, KB)
    assert not is_fixable(exc("ImportError", "No module named 'pandas'"), ENV, KB)
    assert is_fixable(exc("AttributeError", "module has no attribute"), ENV)
    assert is_fixable(exc("TypeError", "takes 2 arguments"), ENV)
    assert not is_fixable(exc("NameError", "name 'labeled_sample' is not defined"), ENV, KB)
    fs = ValidationResult(Status.EXCEPTION, "FileNotFoundError", "no such file",
                          (S(2), StackFrame(Origin.FILESYSTEM)), 2)
    assert not is_fixable(fs, ENV, KB)
    with pytest.raises(ContractViolation):
        is_fixable(ValidationResult.success(), ENV)


def test_localization():
    deep = exc("ImportError", "x", (S(5), D("Lasagne", 6), D("Theano")))
    assert localize_fault(deep, ENV) == "Theano"
    assert localize_fault(exc("ImportError", "No module named 'lasagne.x'"), ENV, KB) == "Lasagne"
    # ambiguous module mapping gives no single culprit
    assert localize_fault(exc("ImportError", "No module named 'yaml'"),
                          EnvironmentSpec("3", (("PyYAML", "5"), ("Theano", "1"))), KB) is None
    assert localize_fault(exc("AttributeError", "m"), ENV, KB) is None


@pytest.mark.parametrize("kind, cells, seconds", [("script", 0, 60), ("notebook", 0, 120),
                                                 ("notebook", 1, 180), ("notebook", 5, 420)])
def test_timeout_budget(kind, cells, seconds):
    assert timeout_budget(kind, cells) == seconds


def test_timeout_budget_rejects_bad_input():
    with pytest.raises(ValueError):
        timeout_budget("notebook", -1)
    with pytest.raises(ValueError):
        timeout_budget("applet")
