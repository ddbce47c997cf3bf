#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace a3r {

/// Names accepted by run_command.
const std::vector<std::string>& command_names();

/// Runs one whole-program command described by a JSON request and returns its run manifest:
/// {"version", "command", "config", "inputs", "outputs", "timings_us", "result"}. Every file named
/// under "outputs" exists when this returns. Throws Error on failure.
///
///   encode        calib, frames_dir, proprio?, features_dir? | test_backbone, lang?, config?, checkpoint?,
///                 out, ply?, ply_color?, threads?
///   bench         config?, n_iters?, warmup?, threads?, image_size?, cameras?, seed?, out?
///   train         dataset, head?, config?, out, threads?
///   ablate        dataset, variants?, seeds?, config?, angles?, sweep_scenes?, out, threads?
///   make-dataset  out, n?, seed?, task?
///   render        scene, out
nlohmann::json run_command(const std::string& name, const nlohmann::json& request);

}  // namespace a3r
