#ifndef ECGI_IO_HPP
#define ECGI_IO_HPP

#include <map>
#include <string>

#include <json.hpp>

#include "ecgi/fields.hpp"
#include "ecgi/mesh.hpp"
#include "ecgi/postprocess_types.hpp"

namespace ecgi {

/// Shortest exact decimal representation (%.17g trimmed by round-trip), so
/// identical numbers always serialize to identical bytes.
std::string format_double(double value);

/// Long-format CSV: header `node,time_ms,value`, time-major ordering.
void write_series_csv(const std::string& path, const TimeSeriesField& series);
TimeSeriesField read_series_csv(const std::string& path);

/// Activation map CSV: header `node,time_ms,activated,method`.
void write_activation_csv(const std::string& path, const ActivationMap& map);
ActivationMap read_activation_csv(const std::string& path);

/// Legacy ASCII VTK unstructured grid with one scalar field per entry.
void write_vtk_snapshot(const std::string& path, const Mesh2D& mesh,
                        const std::map<std::string, Eigen::VectorXd>& point_fields);

void write_json_file(const std::string& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::string& path);

} // namespace ecgi

#endif
