from pathlib import Path

import pytest

from callmask import FunctionRegistry, Vocabulary, load_registry
from callmask.schema import ArgSpec, ArgType, FunctionSchema, SENTINEL

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
DATA = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def downloader_registry() -> FunctionRegistry:
    return load_registry((FIXTURES / "registry.json").read_text())


@pytest.fixture(scope="session")
def ascii_vocab() -> Vocabulary:
    return Vocabulary.printable_ascii()


@pytest.fixture(scope="session")
def reference_prompt() -> str:
    return (DATA / "reference_prompt.txt").read_text()


def make_schema(name: str, description: str, *args: tuple[str, ArgType, str]) -> FunctionSchema:
    return FunctionSchema(name, description, tuple(ArgSpec(*a) for a in args))


def synthetic_registry(count: int = 12) -> FunctionRegistry:
    """A controlled registry for sampling/eval tests: mixed argument types,
    descriptions engineered so similarity ranks are non-trivial."""
    themes = [
        ("fetch_weather_report", "Get the current weather report for a city by name.",
         [("city", ArgType("string"), "City name.")]),
        ("fetch_weather_alerts", "Get severe weather alerts for a city by name.",
         [("city", ArgType("string"), "City name.")]),
        ("set_speaker_volume", "Set the speaker volume to an integer level.",
         [("level", ArgType("integer"), "Loudness from 0 to 100.")]),
        ("set_screen_brightness", "Set the screen brightness to an integer level.",
         [("level", ArgType("integer"), "Brightness from 0 to 100.")]),
        ("pick_shipping_country", "Choose the shipping country for an order.",
         [("country", ArgType("enum", ("US", "UK", "Australia")), "Destination country.")]),
        ("pick_billing_country", "Choose the billing country for an invoice.",
         [("country", ArgType("enum", ("US", "UK", "Australia")), "Billing country.")]),
        ("toggle_airplane_mode", "Turn airplane mode on or off.",
         [("enabled", ArgType("boolean"), "True to enable.")]),
        ("toggle_wifi_radio", "Turn the wifi radio on or off.",
         [("enabled", ArgType("boolean"), "True to enable.")]),
        ("convert_temperature", "Convert a temperature value between scales.",
         [("value", ArgType("float"), "Temperature reading.")]),
        ("convert_currency_amount", "Convert a currency amount between denominations.",
         [("value", ArgType("float"), "Amount of money.")]),
        ("send_push_payload", "Send a small payload dictionary to a device.",
         [("payload", ArgType("dict"), "Key-value payload.")]),
        ("queue_sync_payload", "Queue a payload dictionary for background sync.",
         [("payload", ArgType("dict"), "Key-value payload.")]),
    ]
    schemas = [SENTINEL]
    for name, desc, args in themes[:count]:
        schemas.append(make_schema(name, desc, *args))
    return FunctionRegistry(tuple(schemas))


def write_registry_file(tmp_path: Path, registry: FunctionRegistry) -> Path:
    from callmask import dump_registry

    path = tmp_path / "registry.json"
    path.write_text(dump_registry(registry))
    return path


def load_fixture_corpora(registry: FunctionRegistry):
    from callmask.dataset import parse_negative_corpus, parse_positive_corpus

    positives = parse_positive_corpus((FIXTURES / "positives.txt").read_text(), registry)
    negatives = parse_negative_corpus((FIXTURES / "negatives.txt").read_text())
    return positives, negatives
