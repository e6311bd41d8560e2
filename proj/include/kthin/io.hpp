#pragma once

#include <string>
#include <vector>

#include "kthin/bench.hpp"
#include "kthin/points.hpp"
#include "kthin/thinning.hpp"

namespace kthin {

// Shortest decimal text that round-trips a double exactly (17 significant
// digits).
std::string format_double(double v);

// Parse a points file: one point per line, fields separated by commas or
// whitespace; a first line containing any non-numeric token is treated as a
// header and skipped.  Rows must be rectangular and finite.
PointSet read_points(const std::string& path);

// Write one point per line, comma-separated, 17-digit floats.  Reading the
// file back yields bitwise-equal coordinates.
void write_points(const std::string& path, const PointSet& pts);

// Write a coreset: a `# meta: ...` comment line followed by one 0-based
// index per line.
void write_coreset(const std::string& path, const Coreset& coreset,
                   const std::string& meta);

// CSV with header method,n,coreset_size,mean_mmd,stderr_mmd,wall_time_s.
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);

}  // namespace kthin
