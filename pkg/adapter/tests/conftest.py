import pytest

pytest.importorskip("iava_adapter", reason="adapter package not installed")
