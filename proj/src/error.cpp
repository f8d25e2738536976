// SPDX-License-Identifier: Apache-2.0

#include "citegauge/error.hpp"

namespace citegauge {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyKnowledge: return "EmptyKnowledge";
        case Errc::MalformedRecord: return "MalformedRecord";
        case Errc::IndexGap: return "IndexGap";
        case Errc::EmptyText: return "EmptyText";
        case Errc::MarkerLoss: return "MarkerLoss";
        case Errc::EmptyPool: return "EmptyPool";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::GroupTooSmall: return "GroupTooSmall";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::NonStochastic: return "NonStochastic";
        case Errc::FormatError: return "FormatError";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::BackendError: return "BackendError";
        case Errc::Timeout: return "Timeout";
        case Errc::Unavailable: return "Unavailable";
        case Errc::ProtocolError: return "ProtocolError";
        case Errc::StageOrderError: return "StageOrderError";
        case Errc::ColumnMismatch: return "ColumnMismatch";
        case Errc::IoError: return "IoError";
        case Errc::UsageError: return "UsageError";
        case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

bool is_backend_error(Errc code) noexcept {
    return code == Errc::BackendError || code == Errc::Timeout || code == Errc::Unavailable ||
           code == Errc::ProtocolError;
}

Error::Error(Errc code, const std::string& message, nlohmann::json details)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message),
      code_(code),
      details_(std::move(details)) {}

nlohmann::json Error::to_json() const {
    return {{"error", std::string(kind())}, {"message", what()}, {"details", details_}};
}

}  // namespace citegauge
