#pragma once

// Binary checkpoint ("SGTS" format, version 1). All integers and floats are
// little-endian.
//
//   magic        4 bytes  "SGTS"
//   version      u32
//   config       u32 length + text (serialize_config)
//   epoch        u64      next epoch to run
//   flags        u8       bit 0: teacher active, bit 1: stopped early
//   best_mdice   f64
//   best_epoch   i32
//   stale        i32      epochs since improvement
//   adam_step    u64
//   rng          u32 length + text
//   history      u32 length + text (one metrics row per line, %.17g)
//   tensors      u32 count, then per tensor:
//                u32 name length + name, u32 rank, u32 extents[rank],
//                f64 payload[product(extents)]
//
// Tensor names are "<group>.<param>", group in {student, teacher, best,
// adam.m, adam.v}.

#include <filesystem>
#include <string>

#include "sgts/config.hpp"
#include "sgts/teacher_student.hpp"

namespace sgts {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  TrainerState state;
};

std::string encode_checkpoint(const RunConfig& config, const TrainerState& state);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const TrainerState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgts
