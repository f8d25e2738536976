// SPDX-License-Identifier: Apache-2.0
//
// Error type shared by every module. Each failure carries a stable kind
// name (used in the CLI's machine-readable error JSON) and a details
// object with the structured payload (line numbers, indices, ...).

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace citegauge {

enum class Errc {
    // corpus
    EmptyKnowledge,
    MalformedRecord,
    IndexGap,
    EmptyText,
    MarkerLoss,
    EmptyPool,
    // metrics
    EmptyCorpus,
    LengthMismatch,
    DimensionMismatch,
    GroupTooSmall,
    // xai
    IndexOutOfRange,
    NonStochastic,
    FormatError,
    ShapeMismatch,
    // backends
    BackendError,
    Timeout,
    Unavailable,
    ProtocolError,
    // report
    StageOrderError,
    ColumnMismatch,
    IoError,
    // cli
    UsageError,
    InvalidConfig,
};

std::string_view errc_name(Errc code) noexcept;

/// True for the backend failure family (BackendError, Timeout, Unavailable,
/// ProtocolError).
bool is_backend_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, nlohmann::json details = nlohmann::json::object());

    Errc code() const noexcept { return code_; }
    std::string_view kind() const noexcept { return errc_name(code_); }
    const nlohmann::json& details() const noexcept { return details_; }

    /// {"error": kind, "message": ..., "details": {...}}
    nlohmann::json to_json() const;

private:
    Errc code_;
    nlohmann::json details_;
};

}  // namespace citegauge
