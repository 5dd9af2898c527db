"""Feature schema and label registry for 76-column network flow CSVs."""

from __future__ import annotations

from dataclasses import dataclass

from flowvae.errors import SchemaError

# Harmonized 76-column numeric layout.
ALL_FEATURES: tuple[str, ...] = (
    "Src IP", "Dst IP", "Dst Port", "Protocol", "Flow Duration",
    "Tot Fwd Pkts", "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts",
    "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std",
    "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
    "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max",
    "Flow IAT Min", "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min",
    "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Pkt Len Min", "Pkt Len Max", "Pkt Len Mean",
    "Pkt Len Std", "Pkt Len Var", "FIN Flag Cnt", "SYN Flag Cnt", "RST Flag Cnt",
    "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt", "CWE Flag Count", "ECE Flag Cnt",
    "Down/Up Ratio", "Pkt Size Avg", "Fwd Seg Size Avg", "Bwd Seg Size Avg",
    "Fwd Byts/b Avg", "Fwd Pkts/b Avg", "Fwd Blk Rate Avg",
    "Bwd Byts/b Avg", "Bwd Pkts/b Avg", "Bwd Blk Rate Avg",
    "Subflow Fwd Pkts", "Subflow Fwd Byts", "Subflow Bwd Pkts", "Subflow Bwd Byts",
    "Init Fwd Win Byts", "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min",
    "Active Mean", "Active Std", "Active Max", "Active Min",
    "Idle Mean", "Idle Std", "Idle Max", "Idle Min",
)

IP_FEATURES: tuple[str, ...] = ("Src IP", "Dst IP")

# Most to least impactful, as ranked for the preset-4 model.
TOP40_FEATURES: tuple[str, ...] = (
    "Bwd IAT Std", "Pkt Len Mean", "Fwd IAT Max", "Bwd IAT Min", "Dst Port",
    "Init Bwd Win Byts", "Pkt Size Avg", "Pkt Len Max", "Idle Mean", "Init Fwd Win Byts",
    "Bwd Pkt Len Mean", "Bwd Pkt Len Max", "Active Min", "Idle Max", "Flow Duration",
    "Bwd Pkt Len Std", "Fwd IAT Std", "Bwd IAT Mean", "Pkt Len Var", "Bwd IAT Max",
    "Fwd Header Len", "Pkt Len Std", "Fwd Pkt Len Max", "TotLen Fwd Pkts", "Subflow Fwd Byts",
    "Flow IAT Min", "Fwd IAT Mean", "Flow IAT Mean", "Fwd Seg Size Avg", "Fwd IAT Min",
    "Fwd IAT Tot", "Bwd Pkt Len Min", "Bwd IAT Tot", "Flow IAT Max", "Bwd Header Len",
    "Subflow Fwd Pkts", "Active Std", "TotLen Bwd Pkts", "Idle Min", "Pkt Len Min",
)

NO_IP_FEATURES: tuple[str, ...] = tuple(f for f in ALL_FEATURES if f not in IP_FEATURES)

FEATURE_SETS = {"all76": ALL_FEATURES, "top40": TOP40_FEATURES, "no_ip": NO_IP_FEATURES}

BENIGN = "Benign"
MALICIOUS = "Malicious"

CLASSES: tuple[str, ...] = (
    BENIGN, "DoS Slowloris", "DoS Slowhttptest", "DoS Hulk", "DoS Goldeneye",
    "DDoS LOIC-HTTP", "DDoS LOIC-UDP", "DDoS HOIC-HTTP",
)
BINARY_CLASSES: tuple[str, ...] = (BENIGN, MALICIOUS)

# Raw label spellings in the two datasets, lower-cased, mapped onto CLASSES.
# The 2017 "DDoS" class was generated with LOIC over HTTP.
LABEL_ALIASES: dict[str, str] = {
    "benign": BENIGN,
    "dos slowloris": "DoS Slowloris",
    "dos attacks-slowloris": "DoS Slowloris",
    "dos slowhttptest": "DoS Slowhttptest",
    "dos attacks-slowhttptest": "DoS Slowhttptest",
    "dos hulk": "DoS Hulk",
    "dos attacks-hulk": "DoS Hulk",
    "dos goldeneye": "DoS Goldeneye",
    "dos attacks-goldeneye": "DoS Goldeneye",
    "ddos": "DDoS LOIC-HTTP",
    "ddos loic-http": "DDoS LOIC-HTTP",
    "ddos attacks-loic-http": "DDoS LOIC-HTTP",
    "ddos loic-udp": "DDoS LOIC-UDP",
    "ddos attack-loic-udp": "DDoS LOIC-UDP",
    "ddos hoic-http": "DDoS HOIC-HTTP",
    "ddos attack-hoic": "DDoS HOIC-HTTP",
    "malicious": MALICIOUS,
}


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[str, ...] = ALL_FEATURES
    classes: tuple[str, ...] = CLASSES
    label_column: str = "Label"

    def __post_init__(self):
        if len(set(self.features)) != len(self.features):
            raise SchemaError("feature names must be unique")
        if len(set(self.classes)) != len(self.classes):
            raise SchemaError("class names must be unique")

    @property
    def width(self) -> int:
        return len(self.features)

    @property
    def ip_features(self) -> tuple[str, ...]:
        return tuple(f for f in self.features if f in IP_FEATURES)

    def index(self, name: str) -> int:
        try:
            return self.features.index(name)
        except ValueError:
            raise SchemaError(f"feature {name!r} not in schema") from None

    def class_index(self, label: str) -> int | None:
        """Index of a raw label string, or None when it is not a registered class."""
        canonical = LABEL_ALIASES.get(label.strip().lower(), label.strip())
        try:
            return self.classes.index(canonical)
        except ValueError:
            return None

    @property
    def benign_index(self) -> int:
        return self.classes.index(BENIGN)


def ip_to_int(text: str) -> int:
    """Dotted-quad or decimal string to a 32-bit integer."""
    text = text.strip()
    if "." in text:
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad IPv4 address {text!r}")
        value = 0
        for p in parts:
            octet = int(p)
            if not 0 <= octet <= 255:
                raise ValueError(f"bad IPv4 address {text!r}")
            value = (value << 8) | octet
        return value
    value = int(float(text))
    if not 0 <= value < 2 ** 32:
        raise ValueError(f"IPv4 integer out of range: {text!r}")
    return value


def int_to_ip(value: int) -> str:
    value = int(value)
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))
