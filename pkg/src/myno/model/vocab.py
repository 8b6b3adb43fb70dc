"""IRI vocabulary for device descriptions.

The structural terms follow the oneM2M Base Ontology; four capability
classes and the two datatype properties ``mqttMethod`` / ``mqttTopic``
live in the management-extension namespace. Units come from OM-2 and the
interval/duration nodes from the W3C TIME ontology. These constants are
the single source of truth for fixtures, the extractor, and the virtual
device's self-description.
"""

from __future__ import annotations

from myno.rdf import Iri

ONEM2M_NS = "http://www.onem2m.org/ontology/Base_Ontology/base_ontology#"
EXT_NS = "https://myno.example/ont#"
OM2_NS = "http://www.ontology-of-units-of-measure.org/resource/om-2/"
TIME_NS = "http://www.w3.org/2006/time#"
RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
XSD_NS = "http://www.w3.org/2001/XMLSchema#"


class Vocabulary:
    """Namespace bundle; override the namespaces per deployment if needed."""

    def __init__(
        self,
        onem2m: str = ONEM2M_NS,
        ext: str = EXT_NS,
        om2: str = OM2_NS,
        time: str = TIME_NS,
    ):
        self.onem2m_ns = onem2m
        self.ext_ns = ext
        self.om2_ns = om2
        self.time_ns = time

        # core classes
        self.device = Iri(onem2m + "Device")
        self.service = Iri(onem2m + "Service")
        self.thing_property = Iri(onem2m + "ThingProperty")
        self.measuring_functionality = Iri(onem2m + "MeasuringFunctionality")
        self.controlling_functionality = Iri(onem2m + "ControllingFunctionality")
        self.output_datapoint = Iri(onem2m + "OutputDatapoint")

        # the four extension classes
        self.yang_description = Iri(ext + "YangDescription")
        self.automation_functionality = Iri(ext + "AutomationFunctionality")
        self.configuration_functionality = Iri(ext + "ConfigurationFunctionality")
        self.event_functionality = Iri(ext + "EventFunctionality")

        # the two extension datatype properties
        self.mqtt_method = Iri(ext + "mqttMethod")
        self.mqtt_topic = Iri(ext + "mqttTopic")

        # structural properties
        self.has_service = Iri(onem2m + "hasService")
        self.has_functionality = Iri(onem2m + "hasFunctionality")
        self.has_thing_property = Iri(onem2m + "hasThingProperty")
        self.has_output_datapoint = Iri(onem2m + "hasOutputDatapoint")
        self.has_unit = Iri(onem2m + "hasUnit")
        self.function_description = Iri(onem2m + "functionDescription")
        self.device_category = Iri(onem2m + "deviceCategory")
        self.has_value = Iri(onem2m + "hasValue")
        self.has_parameter = Iri(onem2m + "hasParameter")
        self.param_type = Iri(onem2m + "parameterType")
        self.param_constraint = Iri(onem2m + "parameterConstraint")
        self.monitors_sensor = Iri(onem2m + "monitorsSensor")
        self.threshold_value = Iri(onem2m + "thresholdValue")
        self.comparator = Iri(onem2m + "comparator")
        self.has_interval = Iri(onem2m + "hasInterval")
        self.has_duration = Iri(onem2m + "hasDuration")
        self.crud_operation = Iri(onem2m + "crudOperation")
        self.emits_event = Iri(onem2m + "emitsEvent")
        self.uses_configuration = Iri(onem2m + "usesConfiguration")
        self.triggers_action = Iri(onem2m + "triggersAction")
        self.has_parameter_binding = Iri(onem2m + "hasParameterBinding")

        # external vocabulary
        self.rdf_type = Iri(RDF_NS + "type")
        self.rdfs_label = Iri(RDFS_NS + "label")
        self.time_duration = Iri(time + "Duration")
        self.time_numeric_duration = Iri(time + "numericDuration")
        self.time_unit_type = Iri(time + "unitType")
        self.time_unit_second = Iri(time + "unitSecond")

    def prefixes(self) -> dict[str, str]:
        """Prefix map used when serializing descriptions."""
        return {
            "onem2m": self.onem2m_ns,
            "myno": self.ext_ns,
            "om": self.om2_ns,
            "time": self.time_ns,
            "rdfs": RDFS_NS,
            "xsd": XSD_NS,
        }


VOCAB = Vocabulary()
