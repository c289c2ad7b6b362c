"""Wire format: one JSON object per line, with a ``type`` field.

Worker side: REGISTER, REGISTERED, TASK, RESULT, HEARTBEAT, BYE.
Client side: SUBMIT, ACK, DONE, STATS. See docs/protocol.md.
"""

import json

REGISTER = "REGISTER"
REGISTERED = "REGISTERED"
TASK = "TASK"
RESULT = "RESULT"
HEARTBEAT = "HEARTBEAT"
BYE = "BYE"
SUBMIT = "SUBMIT"
ACK = "ACK"
DONE = "DONE"
STATS = "STATS"
ERROR = "ERROR"

WORKER_TYPES = {REGISTER, RESULT, HEARTBEAT, BYE}
CLIENT_TYPES = {SUBMIT, STATS, BYE}
ALL_TYPES = {REGISTER, REGISTERED, TASK, RESULT, HEARTBEAT, BYE, SUBMIT, ACK, DONE, STATS, ERROR}


class ProtocolError(ValueError):
    pass


def encode(msg_type, **fields):
    if msg_type not in ALL_TYPES:
        raise ProtocolError(f"unknown message type {msg_type!r}")
    fields["type"] = msg_type
    return (json.dumps(fields, separators=(",", ":")) + "\n").encode()


def decode(line):
    try:
        msg = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"bad message: {e}") from None
    if not isinstance(msg, dict) or msg.get("type") not in ALL_TYPES:
        raise ProtocolError(f"bad message: {line[:80]!r}")
    return msg


def task_message(task_id, exe, args=(), sandbox=None, stage_in=(), stage_out=(), env=None):
    return encode(TASK, task_id=task_id, exe=exe, args=list(args), dir=sandbox,
                  stageins=[list(p) for p in stage_in], stageouts=[list(p) for p in stage_out],
                  env=env or {})


def result_message(task_id, exit_code, duration_ms, host, reason=None, signal=None):
    return encode(RESULT, task_id=task_id, exit=exit_code, duration_ms=duration_ms, host=host,
                  reason=reason, signal=signal)
