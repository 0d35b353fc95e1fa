#pragma once

// Plain CSV files (comma separated, '.' decimal point, header row, no
// quoting). Doubles are written with 17 significant digits so every value
// round-trips bit-exactly.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eqface/aggregate.hpp"
#include "eqface/synthgen.hpp"
#include "eqface/trainer.hpp"

namespace eqface {

std::string format_double(double v);
double parse_double(std::string_view text, std::string_view context);

std::vector<std::string> split_fields(std::string_view line);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// sample_id,label,sigma_gt,x_0,...,x_{d_in-1}
std::string dataset_to_csv(const std::vector<EmbeddingSample>& samples);
std::vector<EmbeddingSample> dataset_from_csv(const std::string& text);

// identity,order,s,f_0,...,f_{d-1}
std::string features_to_csv(const std::vector<FeatureRecord>& records);
std::vector<FeatureRecord> features_from_csv(const std::string& text);

// sample_id,s
std::string quality_table_to_csv(const QualityTable& table);
QualityTable quality_table_from_csv(const std::string& text);

// step,iteration,epoch,mean_loss,lr
std::string training_log_to_csv(const std::vector<EpochLog>& log);

}  // namespace eqface
