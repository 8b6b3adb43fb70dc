"""MQTT 3.1.1 transport: packet codec, topic matching, micro-broker, client."""

from myno.mqtt.packets import (
    Connack,
    Connect,
    Disconnect,
    InvalidPacket,
    MalformedPacket,
    MqttError,
    NeedMoreBytes,
    PacketType,
    Pingreq,
    Pingresp,
    Puback,
    Publish,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    decode_packet,
    encode_packet,
)
from myno.mqtt.topics import TopicFilter, topic_matches, validate_publish_topic

__all__ = [
    "Connack",
    "Connect",
    "Disconnect",
    "InvalidPacket",
    "MalformedPacket",
    "MqttError",
    "NeedMoreBytes",
    "PacketType",
    "Pingreq",
    "Pingresp",
    "Puback",
    "Publish",
    "Suback",
    "Subscribe",
    "TopicFilter",
    "Unsuback",
    "Unsubscribe",
    "decode_packet",
    "encode_packet",
    "topic_matches",
    "validate_publish_topic",
]
