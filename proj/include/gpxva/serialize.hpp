#pragma once

#include "gpxva/mgp.hpp"

#include <json.hpp>

namespace gpxva {

using json = nlohmann::json;

json kernel_to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const json& j);

/// Self-describing model records: kernel spec, hyperparameters, training
/// data, alpha and the rescaling maps. Enough to reload and predict without
/// refitting; the Cholesky factor is rebuilt on load and the stored alpha is
/// used as an integrity check.
json gp_to_json(const GpModel& model);
GpModel gp_from_json(const json& j);

json mgp_to_json(const MgpModel& model);
MgpModel mgp_from_json(const json& j);

} // namespace gpxva
