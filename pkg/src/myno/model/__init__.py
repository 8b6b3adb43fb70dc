"""Device capability model: vocabulary, typed extraction, validation, CBOR."""

from myno.model.vocab import Vocabulary, VOCAB
from myno.model.description import (
    AutomationFunction,
    ConfigFunction,
    ControlFunction,
    DanglingReference,
    DeviceDescription,
    ExtractionError,
    MissingUuid,
    MultipleDevices,
    Param,
    SensorFunction,
    Unit,
    UnknownFunctionalityClass,
    Violation,
    description_to_store,
    extract_description,
    validate,
)
from myno.model.cbor import MalformedCbor, decode_cbor, encode_cbor
from myno.model.sizing import size_report

__all__ = [
    "AutomationFunction",
    "ConfigFunction",
    "ControlFunction",
    "DanglingReference",
    "DeviceDescription",
    "ExtractionError",
    "MalformedCbor",
    "MissingUuid",
    "MultipleDevices",
    "Param",
    "SensorFunction",
    "Unit",
    "UnknownFunctionalityClass",
    "VOCAB",
    "Violation",
    "Vocabulary",
    "decode_cbor",
    "description_to_store",
    "encode_cbor",
    "extract_description",
    "size_report",
    "validate",
]
