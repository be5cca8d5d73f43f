"""Note events and their CSV / MAPS-style text formats."""

import csv
from dataclasses import dataclass

from .exceptions import FormatError


@dataclass(frozen=True, order=True)
class NoteEvent:
    onset: float
    pitch: int
    confidence: float = 1.0

    def __post_init__(self):
        if not 21 <= self.pitch <= 108:
            raise ValueError(f"MIDI pitch {self.pitch} outside the piano range 21..108")
        if self.onset != self.onset or self.onset in (float("inf"), float("-inf")):
            raise ValueError("onset must be finite")


def write_events_csv(path, events):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["onset_seconds", "midi_pitch", "confidence"])
        for ev in events:
            writer.writerow([f"{ev.onset:.6f}", ev.pitch, f"{ev.confidence:.6f}"])


def read_events_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"onset_seconds", "midi_pitch"} <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected header onset_seconds,midi_pitch[,confidence]")
        try:
            return [NoteEvent(float(row["onset_seconds"]), int(row["midi_pitch"]),
                              float(row.get("confidence") or 1.0))
                    for row in reader]
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: {exc}") from exc


def read_maps_annotations(path):
    """Read a MAPS-style ``OnsetTime<TAB>OffsetTime<TAB>MidiPitch`` file; offsets are ignored."""
    events = []
    with open(path) as fh:
        header = fh.readline().split()
        if header[:3] != ["OnsetTime", "OffsetTime", "MidiPitch"]:
            raise FormatError(f"{path}: missing OnsetTime/OffsetTime/MidiPitch header")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            try:
                events.append(NoteEvent(float(parts[0]), int(float(parts[2]))))
            except (IndexError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return events


def write_maps_annotations(path, events, duration=0.1):
    with open(path, "w") as fh:
        fh.write("OnsetTime\tOffsetTime\tMidiPitch\n")
        for ev in events:
            fh.write(f"{ev.onset:.6f}\t{ev.onset + duration:.6f}\t{ev.pitch}\n")


def read_events(path):
    """Read either an event CSV or a MAPS annotation file, sniffing the header."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("OnsetTime"):
        return read_maps_annotations(path)
    return read_events_csv(path)
