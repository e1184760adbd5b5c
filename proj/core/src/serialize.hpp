#pragma once

#include "json_util.hpp"
#include "shapdoor/models.hpp"

namespace shapdoor {

json train_config_to_json(const TrainConfig& cfg);
// Missing fields keep the defaults for the parsed kind; unknown keys throw.
TrainConfig train_config_from_json(const json& doc, const std::string& context);

}  // namespace shapdoor
