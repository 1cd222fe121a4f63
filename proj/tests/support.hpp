#pragma once

#include "esonlp/esonlp.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

namespace esonlp::testing {

inline ClinicalNote note(std::string id, std::string patient, std::string text,
                         std::optional<Grade> gold = std::nullopt) {
    ClinicalNote n;
    n.note_id = std::move(id);
    n.patient_id = std::move(patient);
    n.date = "2020-03-02";
    n.author_type = AuthorType::Physician;
    n.note_kind = NoteKind::OnTreatmentVisit;
    n.text = std::move(text);
    n.gold_grade = gold;
    return n;
}

// Fresh directory under the system temp dir, named after the running test.
inline std::filesystem::path scratch_dir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = std::filesystem::temp_directory_path() /
               ("esonlp_" + std::string(info->test_suite_name()) + "_" + info->name());
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string data_file(const std::string& name) { return std::string(ESONLP_DATA_DIR) + "/" + name; }

} // namespace esonlp::testing
