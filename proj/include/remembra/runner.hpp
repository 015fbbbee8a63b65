#pragma once

#include "remembra/config.hpp"

namespace remembra::runner {

struct CompareRow {
  std::string method;
  int task = 0;
  int step = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

// Final-step readout accuracy per (method, task), mean +- std over seeds.
// Throws if the runs disagree on the final step of a task.
std::vector<CompareRow> compare_table(const std::vector<std::vector<probe::ProbeResult>>& runs);
std::string format_compare_table(const std::vector<CompareRow>& rows);
void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows);

// Executes the configured experiment end to end; returns a process exit code.
int run(const config::ExperimentConfig& cfg);

}  // namespace remembra::runner
