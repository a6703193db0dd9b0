"""Standard MIDI File (format 1) export for auditioning scores.

Track 0 carries the title, time signatures and tempo map; every part gets its
own track with a program change taken from the instrument table. Output never
uses running status, so identical scores always produce identical bytes.
"""
from __future__ import annotations

import struct

from .errors import InvalidScore
from .score import Score, instrument, round_half_up, validate_score

SMF_DIVISION = 480
HEADER_PREFIX = bytes.fromhex("4d546864000000060001")
DRUM_CHANNEL = 9
MELODIC_CHANNELS = tuple(c for c in range(16) if c != DRUM_CHANNEL)

# event ordering at equal ticks: meta/program first, then note-offs, then note-ons
_META, _OFF, _ON = 0, 1, 2


def encode_varlen(value: int) -> bytes:
    if value < 0:
        raise ValueError("variable-length quantity must be non-negative")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def velocity_of(dynamic) -> int:
    """``round(level_value * 127)`` with halves rounded up, in integer arithmetic."""
    return (int(dynamic) * 127 + 4) // 8


def _meta(kind: int, payload: bytes) -> bytes:
    return bytes([0xFF, kind]) + encode_varlen(len(payload)) + payload


def _track(events) -> bytes:
    """Serialize ``(tick, order, key, payload)`` events; the list must end with end-of-track."""
    body = bytearray()
    now = 0
    for tick, _, _, payload in sorted(events, key=lambda e: e[:3]):
        body += encode_varlen(tick - now)
        body += payload
        now = tick
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def _channels(score: Score) -> list:
    out = []
    melodic = 0
    for part in score.parts:
        if instrument(part.instrument_name).unpitched:
            out.append(DRUM_CHANNEL)
        else:
            out.append(MELODIC_CHANNELS[melodic % len(MELODIC_CHANNELS)])
            melodic += 1
    return out


def export_midi(score: Score) -> bytes:
    errors = validate_score(score)
    if errors:
        raise InvalidScore(errors)

    div = score.divisions

    def smf(ticks: int) -> int:
        return (ticks * SMF_DIVISION * 2 + div) // (2 * div)

    offsets = score.measure_offsets()
    end = smf(offsets[-1])

    conductor = [(0, _META, 0, _meta(0x03, score.title.encode("utf-8")))]
    prev_ts = None
    for m, ts in enumerate(score.time_signatures()):
        if ts != prev_ts:
            num, den = ts
            payload = bytes([num, den.bit_length() - 1, 24, 8])
            conductor.append((smf(offsets[m]), _META, 1, _meta(0x58, payload)))
            prev_ts = ts
    for m, bpm in score.tempo_map:
        usec = round_half_up(60_000_000 / bpm)
        conductor.append((smf(offsets[m]), _META, 2, _meta(0x51, usec.to_bytes(3, "big"))))
    conductor.append((end, 9, 0, _meta(0x2F, b"")))
    tracks = [_track(conductor)]

    for part, channel in zip(score.parts, _channels(score)):
        inst = instrument(part.instrument_name)
        events = [
            (0, _META, 0, _meta(0x03, part.id.encode("utf-8"))),
            (0, _META, 1, bytes([0xC0 | channel, inst.midi_program])),
        ]
        spans = []
        for m, measure in enumerate(part.measures):
            for note in measure.notes:
                start = offsets[m] + note.onset_ticks
                gate = max(1, round_half_up(note.duration_ticks * note.articulation))
                on, off = smf(start), min(smf(start + gate), end)
                key = inst.min_pitch if note.pitch is None else note.pitch
                spans.append([on, max(off, on + 1), key, velocity_of(note.dynamic)])
        spans.sort(key=lambda s: (s[0], s[2]))
        sounding: dict = {}
        kept = []
        for span in spans:
            prev = sounding.get(span[2])
            if prev is not None and prev[1] > span[0]:
                if prev[0] == span[0]:
                    # unison doubling: one key can only sound once per channel
                    prev[1] = max(prev[1], span[1])
                    continue
                prev[1] = span[0]
            sounding[span[2]] = span
            kept.append(span)
        for on, off, key, vel in kept:
            events.append((on, _ON, key, bytes([0x90 | channel, key, vel])))
            events.append((off, _OFF, key, bytes([0x80 | channel, key, 64])))
        events.append((end, 9, 0, _meta(0x2F, b"")))
        tracks.append(_track(events))

    header = HEADER_PREFIX + struct.pack(">HH", len(tracks), SMF_DIVISION)
    return header + b"".join(tracks)
