"""Topic names and subscription filters.

Filters follow the MQTT 3.1.1 matching rules: ``+`` matches exactly one
level, a trailing ``#`` matches the remaining levels including zero (so
``a/#`` matches ``a`` itself).
"""

from __future__ import annotations

from dataclasses import dataclass

from myno.mqtt.packets import InvalidPacket


def validate_publish_topic(topic: str) -> str:
    """Check a publish topic: non-empty, no wildcards, no NUL."""
    if not topic:
        raise InvalidPacket("topic must not be empty")
    if "+" in topic or "#" in topic:
        raise InvalidPacket(f"wildcard character in publish topic {topic!r}")
    if "\x00" in topic:
        raise InvalidPacket("NUL character in topic")
    return topic


@dataclass(frozen=True)
class TopicFilter:
    segments: tuple[str, ...]

    @classmethod
    def parse(cls, text: str) -> "TopicFilter":
        if not text:
            raise InvalidPacket("topic filter must not be empty")
        if "\x00" in text:
            raise InvalidPacket("NUL character in topic filter")
        segments = tuple(text.split("/"))
        for i, seg in enumerate(segments):
            if not seg:
                raise InvalidPacket(f"empty segment in filter {text!r}")
            if seg == "#" and i != len(segments) - 1:
                raise InvalidPacket(f"'#' not in final position in {text!r}")
            if seg not in ("+", "#") and ("+" in seg or "#" in seg):
                raise InvalidPacket(f"wildcard mixed into literal segment {seg!r}")
        return cls(segments)

    def __str__(self) -> str:
        return "/".join(self.segments)

    def matches(self, topic: str) -> bool:
        return topic_matches(self, topic)


def topic_matches(topic_filter: TopicFilter | str, topic: str) -> bool:
    """True iff ``topic`` matches ``topic_filter`` per MQTT 3.1.1 rules."""
    if isinstance(topic_filter, str):
        topic_filter = TopicFilter.parse(topic_filter)
    levels = topic.split("/")
    segments = topic_filter.segments
    i = 0
    while True:
        if i == len(segments):
            return i == len(levels)
        seg = segments[i]
        if seg == "#":
            # matches the parent level too: "a/#" matches "a"
            return True
        if i >= len(levels):
            return False
        if seg != "+" and seg != levels[i]:
            return False
        i += 1
