"""MYNO: MQTT + YANG + NETCONF + Ontology device management at the network edge.

Devices announce themselves by publishing ontology-based descriptions over
MQTT; the bridge compiles those descriptions into a YANG model and exposes
the fleet northbound over NETCONF-lite and HTTP while dispatching generated
RPCs southbound as MQTT commands.
"""

__version__ = "0.1.0"
