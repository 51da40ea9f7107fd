"""
Label tables, feature order, protocol names and the fixed prompt texts.
"""

import enum


class ClassLabel(enum.Enum):
    """
    The six-way label space. Member order is the canonical class order used by every
    model file, signature vector and table.
    """

    ICMP = "ICMP"
    UDP = "UDP"
    TCP = "TCP"
    PSHACK = "PSHACK"
    RSTFIN = "RSTFIN"
    BENIGN = "BENIGN"

    @property
    def index(self):
        return _label_index[self]

    @property
    def display_name(self):
        return _display_names[self]

    @classmethod
    def from_index(cls, idx):
        return CLASS_ORDER[idx]

    @classmethod
    def parse(cls, text):
        """
        Maps a canonical string or any accepted alias (case-insensitive) to a label.
        """
        if isinstance(text, cls):
            return text

        key = str(text).strip().upper()
        if key not in _alias_lookup:
            raise KeyError("ClassLabel:parse: label string '%s' not recognized." % text)
        return _alias_lookup[key]


CLASS_ORDER = tuple(ClassLabel)
NUM_CLASSES = len(CLASS_ORDER)
CANONICAL_LABELS = tuple(x.value for x in CLASS_ORDER)

_label_index = {label: num for num, label in enumerate(CLASS_ORDER)}

_display_names = {
    ClassLabel.ICMP: "ICMP",
    ClassLabel.UDP: "UDP",
    ClassLabel.TCP: "TCP",
    ClassLabel.PSHACK: "PSH/ACK",
    ClassLabel.RSTFIN: "RST/FIN",
    ClassLabel.BENIGN: "Benign",
}

# Accepted spellings, CICIoT-2023 label strings included
label_aliases = {
    ClassLabel.ICMP: ("ICMP", "ICMP FLOOD", "DDOS-ICMP_FLOOD", "DOS-ICMP_FLOOD"),
    ClassLabel.UDP: ("UDP", "UDP FLOOD", "DDOS-UDP_FLOOD", "DOS-UDP_FLOOD"),
    ClassLabel.TCP: ("TCP", "TCP FLOOD", "TCP SYN", "TCP SYN FLOOD", "SYN", "SYN FLOOD", "DDOS-TCP_FLOOD",
                     "DDOS-SYN_FLOOD", "DOS-TCP_FLOOD", "DOS-SYN_FLOOD"),
    ClassLabel.PSHACK: ("PSHACK", "PSH/ACK", "PSH-ACK", "PSH+ACK", "PSH_ACK", "PSHACK FLOOD", "PSH/ACK FLOOD",
                        "DDOS-PSHACK_FLOOD"),
    ClassLabel.RSTFIN: ("RSTFIN", "RST/FIN", "RST-FIN", "RST+FIN", "RST_FIN", "RSTFIN FLOOD", "RST/FIN FLOOD",
                        "DDOS-RSTFINFLOOD", "DDOS-RSTFIN_FLOOD"),
    ClassLabel.BENIGN: ("BENIGN", "BENIGNTRAFFIC", "BENIGN TRAFFIC", "NORMAL"),
}

_alias_lookup = {}
for _label, _names in label_aliases.items():
    for _name in _names:
        _alias_lookup[_name] = _label

### Flow features

# Frozen feature order, shared by vectors, CSVs and model inputs
FEATURE_ORDER = ("proto", "rate", "iat_ms", "payload_len", "flag_psh", "flag_ack", "flag_syn", "flag_rst",
                 "flag_fin")
FLAG_FIELDS = FEATURE_ORDER[4:]
NUM_FEATURES = len(FEATURE_ORDER)

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

proto_names = {PROTO_ICMP: "ICMP", PROTO_TCP: "TCP", PROTO_UDP: "UDP"}

STDDEV_FLOOR = 1e-8

DESCRIPTION_TEMPLATE = ("Protocol: {name} ({proto}). Packet rate: {rate:.3f} pps. "
                        "Mean inter-arrival time: {iat:.3f} ms. Mean payload length: {length:.3f} bytes. "
                        "TCP flags: PSH={p} ACK={a} SYN={s} RST={r} FIN={f}.")

### Rule gate defaults

PAYLOAD_THRESHOLD = 60.0
RATE_THRESHOLD = 1.0

### Prompt texts

INSTRUCTION_TEXT = ("Classify the flow as exactly one of: ICMP, UDP, TCP, PSHACK, RSTFIN, BENIGN. "
                    "State your final answer exactly once as: The answer is <LABEL>.")

DATA_DESCRIPTION_PREFIX = "Data description: "

SHORT_KB_TEMPLATE = ("ICMP flood: proto 1, high rate, small packets.\n"
                     "UDP flood: proto 17, high rate, small packets.\n"
                     "TCP SYN flood: proto 6, SYN set, handshake never completes.\n"
                     "PSHACK flood: proto 6, PSH and ACK set.\n"
                     "RSTFIN flood: proto 6, RST or FIN set.\n"
                     "Benign: large packets (>{payload:g} B) or low rate (<{rate:g} pps).")

SCAFFOLD_TEMPLATE = ("Let's think step by step.\n"
                     "Step 1 (packet-size & rate gate): a flow whose mean packet length is >{payload:g} B "
                     "or whose packet rate is <{rate:g} pps is BENIGN.\n"
                     "Step 2 (protocol branch): Distinguish ICMP and UDP floods directly via the proto field; "
                     "proto 1 is ICMP, proto 17 is UDP, any protocol other than 1, 6 or 17 is BENIGN.\n"
                     "Step 3 (TCP flag analysis): if the protocol is TCP (proto 6), map the tuple "
                     "(PSH, ACK, RST, FIN): PSH=1 and ACK=1 is PSHACK; otherwise RST=1 or FIN=1 is RSTFIN; "
                     "otherwise fall back to TCP flood.\n"
                     "Finish with one line of the form: The answer is <LABEL>.")

ANSWER_PHRASE = "The answer is"

### Model references

LLM_ENDPOINT = "http://localhost:11434"
LLM_GENERATE_PATH = "/api/generate"
LLM_TIMEOUT_MS = 120000
LLM_RETRIES = 2
LLM_MAX_IN_FLIGHT = 4

# Student models evaluated with the framework
STUDENT_MODELS = ("llama3.2:1b", "llama3.2:3b", "gemma3:1b", "gemma3:4b")
