#pragma once

#include "esonlp/error.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace esonlp {

/// CTCAE esophagitis grade. Grades 4 and 5 never occur in the data and are not representable.
enum class Grade : std::uint8_t { None = 0, G1 = 1, G2 = 2, G3 = 3 };

inline constexpr std::array<Grade, 4> kAllGrades{Grade::None, Grade::G1, Grade::G2, Grade::G3};

inline int to_int(Grade g) { return static_cast<int>(g); }

inline Grade grade_from_int(long long v) {
    if (v < 0 || v > 3) {
        throw DataError("grade out of range: " + std::to_string(v) + " (expected 0-3)");
    }
    return static_cast<Grade>(v);
}

inline bool operator<(Grade a, Grade b) { return to_int(a) < to_int(b); }

enum class Task : std::uint8_t { Task1 = 1, Task2 = 2, Task3 = 3 };

inline constexpr std::array<Task, 3> kAllTasks{Task::Task1, Task::Task2, Task::Task3};

inline std::size_t class_count(Task t) { return t == Task::Task3 ? 3 : 2; }

inline int task_number(Task t) { return static_cast<int>(t); }

inline Task task_from_int(long long v) {
    if (v < 1 || v > 3) {
        throw UsageError("unknown task " + std::to_string(v) + " (expected 1, 2 or 3)");
    }
    return static_cast<Task>(v);
}

inline bool is_binary(Task t) { return class_count(t) == 2; }

/// Display names in class-index order, which is also severity order.
inline std::vector<std::string> class_names(Task t) {
    switch (t) {
    case Task::Task1: return {"None", "Grade 1-3"};
    case Task::Task2: return {"Grade <= 1", "Grade 2-3"};
    case Task::Task3: return {"None", "Grade 1", "Grade 2-3"};
    }
    return {};
}

/**
 * Maps a grade onto the class index of a classification task.
 *
 * Task 1: none vs. grade 1-3. Task 2: grade <= 1 vs. grade 2-3.
 * Task 3: none vs. grade 1 vs. grade 2-3. The mapping is monotone in the grade.
 */
inline std::size_t map_grade_to_task_label(Grade g, Task t) {
    const int v = to_int(g);
    switch (t) {
    case Task::Task1: return v >= 1 ? 1 : 0;
    case Task::Task2: return v >= 2 ? 1 : 0;
    case Task::Task3: return v >= 2 ? 2 : static_cast<std::size_t>(v);
    }
    return 0;
}

} // namespace esonlp
