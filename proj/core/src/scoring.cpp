#include "adagent/scoring.hpp"

namespace adagent {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::normal:
      return "normal";
    case Verdict::anomalous:
      return "anomalous";
    case Verdict::uncertain:
      return "uncertain";
  }
  throw ContractError("to_string: invalid Verdict");
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "normal") return Verdict::normal;
  if (s == "anomalous") return Verdict::anomalous;
  if (s == "uncertain") return Verdict::uncertain;
  throw SchemaError("verdict_from_string: '" + s + "' is not normal/anomalous/uncertain");
}

}  // namespace adagent
